#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lics/expert.hpp"
#include "lics/model.hpp"
#include "lics/safety.hpp"
#include "lics/session.hpp"
#include "lics/world.hpp"

namespace lics {

inline constexpr double kScoreSpeed = 2.0;  // m/s divisor for T*, fixed for every trial

/// T* = L* / 2 m/s. Throws MissingLstar when the world has no L*.
double optimal_time(const World& world);

/// success * T* / clip(T, 2T*, 8T*).
double score_trial(bool success, double traversal_time, double optimal);

struct TraceRow {
  double t = 0.0;
  Pose2 pose;
  Action proposed;
  Action executed;
  bool safe = true;
  MotionClass motion = MotionClass::kStationary;
};

struct TrialResult {
  std::string world_id;
  std::string policy;
  int trial = 0;
  Outcome outcome = Outcome::kTimeout;
  double time = 0.0;  // T, s
  double optimal = 0.0;  // T*, s
  double score = 0.0;
  double max_v = 0.0;
  bool policy_failure = false;
  std::string failure_message;
  int safety_overrides = 0;
  std::vector<TraceRow> trace;

  nlohmann::json to_json(bool with_trace = false) const;
};

struct TrialConfig {
  SessionConfig session;  // session.timeout is replaced by max(60, 10 T*)
  bool safety = false;
  SafetyConfig safety_cfg;
  std::uint64_t seed = 0;
  int trial = 0;
  bool keep_trace = false;
};

TrialResult run_trial(const World& world, const Policy& policy, const TrialConfig& cfg);

struct EvalConfig {
  int trials = 3;
  double max_v = 2.0;
  bool safety = false;
  std::uint64_t seed = 0;
  SessionConfig session;
  SafetyConfig safety_cfg;
  int threads = 0;
  bool keep_trace = false;
};

/// Runs every (world, trial) pair; trial seeds depend only on the world
/// position and trial index, so policies compared on the same worlds see
/// identical conditions.
std::vector<TrialResult> run_evaluation(const std::vector<World>& worlds, const Policy& policy,
                                        const EvalConfig& cfg);

struct Aggregate {
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;           // percent
  std::optional<double> average_time;  // over successful trials only
  double average_score = 0.0;          // over all trials

  nlohmann::json to_json() const;
};

Aggregate aggregate(const std::vector<TrialResult>& results);

/// Per-trial rows, per-world and overall aggregates.
nlohmann::json report_json(const std::vector<TrialResult>& results);

/// Columns: world_id, trial, policy, outcome, T, score.
std::string report_csv(const std::vector<TrialResult>& results);

/// Trajectory trace as JSON lines of (t, pose, action, verdict).
std::string trace_jsonl(const TrialResult& result);

/// Runs a trained model on normalized scans and the unit local goal.
class LearnedPolicy : public Policy {
 public:
  explicit LearnedPolicy(Model<float> model, std::string name = "lics");
  Action act(const Observation& obs) const override;
  std::string name() const override { return name_; }
  const Model<float>& model() const { return model_; }

 private:
  Model<float> model_;
  std::string name_;
};

}  // namespace lics
