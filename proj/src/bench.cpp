#include "lics/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "lics/error.hpp"

namespace lics {

double optimal_time(const World& world) {
  if (!(world.shortest_path_length > 0.0) || !std::isfinite(world.shortest_path_length))
    throw MissingLstar("world '" + world.id + "' has no shortest path length");
  return world.shortest_path_length / kScoreSpeed;
}

double score_trial(bool success, double traversal_time, double optimal) {
  if (!success) return 0.0;
  const double clipped = std::clamp(traversal_time, 2.0 * optimal, 8.0 * optimal);
  return optimal / clipped;
}

nlohmann::json TrialResult::to_json(bool with_trace) const {
  nlohmann::json j = {{"world_id", world_id},
                      {"policy", policy},
                      {"trial", trial},
                      {"outcome", to_string(outcome)},
                      {"T", time},
                      {"T_star", optimal},
                      {"score", score},
                      {"max_v", max_v},
                      {"policy_failure", policy_failure},
                      {"safety_overrides", safety_overrides}};
  if (policy_failure) j["failure_message"] = failure_message;
  if (with_trace) {
    std::istringstream lines(trace_jsonl(*this));
    nlohmann::json rows = nlohmann::json::array();
    for (std::string line; std::getline(lines, line);) rows.push_back(nlohmann::json::parse(line));
    j["trace"] = rows;
  }
  return j;
}

TrialResult run_trial(const World& world, const Policy& policy, const TrialConfig& cfg) {
  TrialResult result;
  result.world_id = world.id;
  result.policy = policy.name();
  result.trial = cfg.trial;
  result.optimal = optimal_time(world);
  result.max_v = cfg.session.limits.v_max;

  SessionConfig session = cfg.session;
  session.timeout = std::max(60.0, 10.0 * result.optimal);
  session.seed = cfg.seed;
  NavSession sim(world, session);

  while (sim.outcome() == Outcome::kRunning) {
    const Observation obs = sim.observe();
    Action proposed;
    try {
      proposed = policy.act(obs);
    } catch (const Error& e) {
      result.policy_failure = true;
      result.failure_message = e.what();
      break;
    }
    Action executed = proposed;
    SafetyVerdict verdict;
    if (cfg.safety) {
      const auto points = scan_to_points(obs.scan, obs.lidar);
      verdict = check_action(points, proposed, cfg.safety_cfg);
      if (!verdict.safe) {
        executed = filter_action(points, proposed, cfg.safety_cfg, obs.goal.point);
        ++result.safety_overrides;
      }
    }
    if (cfg.keep_trace)
      result.trace.push_back({sim.time(), sim.state().pose, proposed, executed, verdict.safe,
                              cfg.safety ? verdict.motion : classify_motion(proposed, cfg.safety_cfg.epsilon_w)});
    sim.apply(executed);
  }
  result.outcome = result.policy_failure ? Outcome::kTimeout : sim.outcome();
  result.time = sim.time();
  result.score = score_trial(result.outcome == Outcome::kSuccess, result.time, result.optimal);
  return result;
}

std::vector<TrialResult> run_evaluation(const std::vector<World>& worlds, const Policy& policy,
                                        const EvalConfig& cfg) {
  if (cfg.trials < 1) throw InvalidConfig("trials must be >= 1");
  if (!(cfg.max_v > 0.0)) throw InvalidConfig("max_v must be > 0");
  const std::size_t total = worlds.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialResult> results(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      const std::size_t w = k / static_cast<std::size_t>(cfg.trials);
      const int trial = static_cast<int>(k % static_cast<std::size_t>(cfg.trials));
      TrialConfig tc;
      tc.session = cfg.session;
      tc.session.limits.v_max = cfg.max_v;
      tc.safety = cfg.safety;
      tc.safety_cfg = cfg.safety_cfg;
      tc.seed = derive_seed(cfg.seed, w, static_cast<std::uint64_t>(trial));
      tc.trial = trial;
      tc.keep_trace = cfg.keep_trace;
      results[k] = run_trial(worlds[w], policy, tc);
    }
  };
  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, total));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

nlohmann::json Aggregate::to_json() const {
  return {{"trials", trials},
          {"successes", successes},
          {"success_rate", success_rate},
          {"average_time", average_time ? nlohmann::json(*average_time) : nlohmann::json()},
          {"average_score", average_score}};
}

Aggregate aggregate(const std::vector<TrialResult>& results) {
  Aggregate agg;
  agg.trials = static_cast<int>(results.size());
  if (results.empty()) return agg;
  double time_sum = 0.0;
  double score_sum = 0.0;
  for (const auto& r : results) {
    score_sum += r.score;
    if (r.outcome == Outcome::kSuccess) {
      ++agg.successes;
      time_sum += r.time;
    }
  }
  agg.success_rate = 100.0 * agg.successes / agg.trials;
  if (agg.successes > 0) agg.average_time = time_sum / agg.successes;
  agg.average_score = score_sum / agg.trials;
  return agg;
}

nlohmann::json report_json(const std::vector<TrialResult>& results) {
  nlohmann::json rows = nlohmann::json::array();
  std::vector<std::string> order;
  std::map<std::string, std::vector<TrialResult>> by_world;
  for (const auto& r : results) {
    rows.push_back(r.to_json());
    if (!by_world.count(r.world_id)) order.push_back(r.world_id);
    by_world[r.world_id].push_back(r);
  }
  nlohmann::json worlds = nlohmann::json::array();
  for (const auto& id : order) {
    nlohmann::json w = aggregate(by_world[id]).to_json();
    w["world_id"] = id;
    worlds.push_back(w);
  }
  return {{"trials", rows}, {"per_world", worlds}, {"overall", aggregate(results).to_json()}};
}

std::string report_csv(const std::vector<TrialResult>& results) {
  std::ostringstream out;
  out << "world_id,trial,policy,outcome,T,score\n";
  out << std::setprecision(10);
  for (const auto& r : results)
    out << r.world_id << ',' << r.trial << ',' << r.policy << ',' << to_string(r.outcome) << ','
        << r.time << ',' << r.score << '\n';
  return out.str();
}

std::string trace_jsonl(const TrialResult& result) {
  std::string out;
  for (const auto& row : result.trace) {
    nlohmann::json j = {{"t", row.t},
                        {"pose", {row.pose.x, row.pose.y, row.pose.theta}},
                        {"action", {row.executed.v, row.executed.w}},
                        {"proposed", {row.proposed.v, row.proposed.w}},
                        {"verdict", {{"safe", row.safe}, {"class", to_string(row.motion)}}}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

LearnedPolicy::LearnedPolicy(Model<float> model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {}

Action LearnedPolicy::act(const Observation& obs) const {
  const ModelConfig& cfg = model_.config();
  if (static_cast<int>(obs.scan.size()) != cfg.scan_size)
    throw SchemaMismatch("scan length " + std::to_string(obs.scan.size()) + " != model H " +
                         std::to_string(cfg.scan_size));
  Matrix<float> scan(1, cfg.scan_size);
  const double inv = 1.0 / cfg.max_range;
  for (int i = 0; i < cfg.scan_size; ++i)
    scan(0, i) = static_cast<float>(std::min(obs.scan[static_cast<std::size_t>(i)] * inv, 1.0));
  Matrix<float> goal(1, 2);
  goal << static_cast<float>(obs.goal.unit.x()), static_cast<float>(obs.goal.unit.y());
  const Matrix<float> out = model_.forward(scan, goal);
  return obs.limits.clamp({static_cast<double>(out(0, 0)), static_cast<double>(out(0, 1))});
}

}  // namespace lics
