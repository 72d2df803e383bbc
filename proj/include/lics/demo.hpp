#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "lics/expert.hpp"
#include "lics/session.hpp"
#include "lics/world.hpp"

namespace lics {

struct NoiseConfig {
  double sigma = 0.25;  // std of the Gaussian added to both v and w
  std::uint64_t seed = 0;
};

/// a* + N(0, sigma^2) on each channel, then clamped to the velocity limits.
/// No random draw is consumed when sigma == 0.
Action perturb_action(const Action& optimal, double sigma, const VelocityLimits& limits,
                      std::mt19937_64& rng);

struct DemoRecord {
  double t = 0.0;
  std::string world_id;
  int episode_id = 0;
  std::vector<double> scan;  // meters
  Vec2 goal = Vec2::UnitX();  // unit local goal, robot frame
  Action a_star;
  Action a_exec;
};

struct EpisodeResult {
  std::vector<DemoRecord> records;
  Outcome outcome = Outcome::kRunning;
  double duration = 0.0;
};

/// Closed loop: observe, ask the expert, perturb, step. One record per tick.
EpisodeResult record_episode(const World& world, const Policy& expert, const NoiseConfig& noise,
                             const SessionConfig& session, int episode_id = 0);

struct DatasetConfig {
  double sigma = 0.25;
  int episodes_per_world = 2;
  int retry_budget = 20;
  std::uint64_t seed = 0;
  SessionConfig session;
  int threads = 0;  // 0 = hardware concurrency
};

struct Dataset {
  nlohmann::json manifest;
  std::vector<DemoRecord> records;
};

/// Repeats record_episode per world until `episodes_per_world` successes or the
/// retry budget runs out. Only successful episodes are kept; skipped worlds are
/// listed in the manifest warnings. Output order follows the input world order.
Dataset build_dataset(const std::vector<World>& worlds, const Policy& expert,
                      const DatasetConfig& cfg);

/// Manifest skeleton shared by expert and human recordings.
nlohmann::json make_manifest(int scan_size, double sigma, const VelocityLimits& limits,
                             const std::string& source);

nlohmann::json record_to_json(const DemoRecord& record);
DemoRecord record_from_json(const nlohmann::json& j);

/// `<stem>.manifest.json` beside `<stem>.ndjson`.
std::filesystem::path manifest_path(const std::filesystem::path& records_path);

/// Writes the records file and its manifest.
void write_dataset(const Dataset& dataset, const std::filesystem::path& records_path);

/// Reads and validates a records file (and its manifest when present).
/// Throws ParseError on malformed lines, SchemaMismatch on inconsistent scans.
Dataset read_dataset(const std::filesystem::path& records_path);

/// Appends whole episodes to a records file and keeps its manifest current;
/// used by live recording.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& records_path, nlohmann::json manifest);
  void append_episode(const std::vector<DemoRecord>& records, double duration);
  /// Counts an episode that ended without success and was not written.
  void discard_episode(const std::string& world_id, Outcome outcome);
  std::size_t record_count() const { return count_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void write_manifest() const;

  std::filesystem::path path_;
  std::ofstream out_;
  nlohmann::json manifest_;
  std::size_t count_ = 0;
};

}  // namespace lics
