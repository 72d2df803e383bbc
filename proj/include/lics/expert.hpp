#pragma once

#include <string>
#include <vector>

#include "lics/geometry.hpp"
#include "lics/planning.hpp"
#include "lics/simulator.hpp"

namespace lics {

/// Everything a policy sees at one control tick.
struct Observation {
  LidarScan scan;
  LocalGoal goal;
  Action current;  // velocities measured at the start of the tick
  Footprint footprint;
  VelocityLimits limits;
  LidarConfig lidar;
  /// Remaining global path in the robot frame. Privileged input for experts;
  /// learned policies only see scan and goal.unit.
  std::vector<Vec2> path;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const Observation& obs) const = 0;
  virtual std::string name() const = 0;
};

struct DwaConfig {
  int v_samples = 11;
  int w_samples = 21;
  double horizon = 1.5;      // s
  double sim_step = 0.1;     // s between footprint checks along an arc
  double period = kControlPeriod;
  double heading_weight = 0.8;
  double clearance_weight = 0.2;
  double velocity_weight = 0.2;  // per m/s, so the speed-clearance trade does not depend on v_max
  double clearance_cap = 2.0;  // m
  double recover_w = 1.0;      // rad/s
  double collision_margin = 0.03;  // m added around the footprint
  double carrot_distance = 0.2;    // m along obs.path past the arc end to the heading target
  double goal_reach = 0.25;        // m; arcs passing this close to the path end score full heading

  void validate() const;
};

/// Point `distance` meters along a polyline (its last point when shorter).
Vec2 point_along(const std::vector<Vec2>& path, double distance);

/// Projects `from` onto the nearest segment of `path` (earliest on ties) and
/// walks `distance` meters further along it.
Vec2 path_carrot(const std::vector<Vec2>& path, const Vec2& from, double distance);

/// Dynamic-window search over constant (v, w) arcs. Heading is scored at each
/// arc end toward path_carrot(obs.path, arc end, carrot_distance), or toward
/// obs.goal.point when no path is given. Arcs that pass within goal_reach of
/// the path end get the full heading score. Returns the rotate-in-place recovery
/// (0, +-recover_w) toward the goal side when no arc is admissible or when the
/// best arc is to stay at rest.
Action dwa_expert_action(const Observation& obs, const DwaConfig& cfg = {});

/// Same search, also reporting whether the recovery branch fired.
struct DwaDecision {
  Action action;
  bool recovery = false;
  int admissible = 0;
  double score = 0.0;
};
DwaDecision dwa_decide(const Observation& obs, const DwaConfig& cfg = {});

class DwaExpert : public Policy {
 public:
  explicit DwaExpert(DwaConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }
  Action act(const Observation& obs) const override { return dwa_expert_action(obs, cfg_); }
  std::string name() const override { return "dwa"; }
  const DwaConfig& config() const { return cfg_; }

 private:
  DwaConfig cfg_;
};

/// Always returns the same command.
class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(Action a, std::string name = "constant")
      : action_(a), name_(std::move(name)) {}
  Action act(const Observation&) const override { return action_; }
  std::string name() const override { return name_; }

 private:
  Action action_;
  std::string name_;
};

}  // namespace lics
