#include "lics/demo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "lics/error.hpp"

namespace lics {

Action perturb_action(const Action& optimal, double sigma, const VelocityLimits& limits,
                      std::mt19937_64& rng) {
  Action a = optimal;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    a.v += noise(rng);
    a.w += noise(rng);
  }
  return limits.clamp(a);
}

EpisodeResult record_episode(const World& world, const Policy& expert, const NoiseConfig& noise,
                             const SessionConfig& session, int episode_id) {
  if (noise.sigma < 0.0) throw InvalidConfig("noise sigma must be >= 0");
  NavSession sim(world, session);
  std::mt19937_64 rng(noise.seed);
  EpisodeResult result;
  while (sim.outcome() == Outcome::kRunning) {
    Observation obs = sim.observe();
    DemoRecord rec;
    rec.t = sim.time();
    rec.world_id = world.id;
    rec.episode_id = episode_id;
    rec.goal = obs.goal.unit;
    rec.a_star = expert.act(obs);
    rec.a_exec = perturb_action(rec.a_star, noise.sigma, session.limits, rng);
    rec.scan = std::move(obs.scan);
    sim.apply(rec.a_exec);
    result.records.push_back(std::move(rec));
  }
  result.outcome = sim.outcome();
  result.duration = sim.time();
  return result;
}

nlohmann::json make_manifest(int scan_size, double sigma, const VelocityLimits& limits,
                             const std::string& source) {
  return {{"format", "lics-demo"},
          {"schema_version", 1},
          {"scan_size", scan_size},
          {"sigma", sigma},
          {"source", source},
          {"limits",
           {{"v_max", limits.v_max},
            {"w_max", limits.w_max},
            {"a_max", limits.a_max},
            {"alpha_max", limits.alpha_max}}},
          {"worlds", nlohmann::json::array()},
          {"warnings", nlohmann::json::array()},
          {"record_count", 0}};
}

namespace {

struct WorldEpisodes {
  std::vector<EpisodeResult> kept;
  std::vector<int> kept_ids;
  int attempts = 0;
};

WorldEpisodes collect_world(const World& world, std::size_t index, const Policy& expert,
                            const DatasetConfig& cfg) {
  WorldEpisodes out;
  for (int attempt = 0; attempt < cfg.retry_budget &&
                        static_cast<int>(out.kept.size()) < cfg.episodes_per_world;
       ++attempt) {
    ++out.attempts;
    SessionConfig session = cfg.session;
    session.seed = derive_seed(cfg.seed, index, 2 * static_cast<std::uint64_t>(attempt));
    NoiseConfig noise{cfg.sigma, derive_seed(cfg.seed, index, 2 * static_cast<std::uint64_t>(attempt) + 1)};
    EpisodeResult ep = record_episode(world, expert, noise, session, attempt);
    if (ep.outcome == Outcome::kSuccess) {
      out.kept.push_back(std::move(ep));
      out.kept_ids.push_back(attempt);
    }
  }
  return out;
}

}  // namespace

Dataset build_dataset(const std::vector<World>& worlds, const Policy& expert,
                      const DatasetConfig& cfg) {
  if (worlds.empty()) throw InvalidConfig("build_dataset needs at least one world");
  if (cfg.episodes_per_world < 1 || cfg.retry_budget < 1)
    throw InvalidConfig("episodes_per_world and retry_budget must be >= 1");
  cfg.session.validate();

  std::vector<WorldEpisodes> per_world(worlds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < worlds.size(); i = next++)
      per_world[i] = collect_world(worlds[i], i, expert, cfg);
  };
  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(worlds.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  Dataset ds;
  ds.manifest = make_manifest(cfg.session.lidar.beam_count, cfg.sigma, cfg.session.limits,
                              expert.name());
  ds.manifest["seed"] = cfg.seed;
  ds.manifest["episodes_per_world"] = cfg.episodes_per_world;
  ds.manifest["retry_budget"] = cfg.retry_budget;
  for (std::size_t i = 0; i < worlds.size(); ++i) {
    auto& w = per_world[i];
    nlohmann::json entry = {{"id", worlds[i].id},
                            {"attempts", w.attempts},
                            {"skipped", static_cast<int>(w.kept.size()) < cfg.episodes_per_world},
                            {"episodes", nlohmann::json::array()}};
    for (std::size_t k = 0; k < w.kept.size(); ++k) {
      auto& ep = w.kept[k];
      entry["episodes"].push_back({{"episode_id", w.kept_ids[k]},
                                   {"records", ep.records.size()},
                                   {"duration", ep.duration}});
      for (auto& r : ep.records) ds.records.push_back(std::move(r));
    }
    if (entry["skipped"].get<bool>()) {
      ds.manifest["warnings"].push_back(
          {{"type", "WorldSkipped"},
           {"world_id", worlds[i].id},
           {"successes", w.kept.size()},
           {"attempts", w.attempts}});
    }
    ds.manifest["worlds"].push_back(std::move(entry));
  }
  ds.manifest["record_count"] = ds.records.size();
  return ds;
}

nlohmann::json record_to_json(const DemoRecord& r) {
  nlohmann::json j;
  j["t"] = r.t;
  j["world_id"] = r.world_id;
  j["episode_id"] = r.episode_id;
  j["scan"] = r.scan;
  j["goal"] = {r.goal.x(), r.goal.y()};
  j["a_star"] = {r.a_star.v, r.a_star.w};
  j["a_exec"] = {r.a_exec.v, r.a_exec.w};
  return j;
}

namespace {

double finite_number(const nlohmann::json& j, const char* field) {
  if (!j.is_number()) throw ParseError(std::string("field '") + field + "' is not a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ParseError(std::string("field '") + field + "' is not finite");
  return x;
}

std::pair<double, double> pair_field(const nlohmann::json& j, const char* field) {
  const auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string("missing field '") + field + "'");
  if (!it->is_array() || it->size() != 2)
    throw ParseError(std::string("field '") + field + "' must be a pair");
  return {finite_number((*it)[0], field), finite_number((*it)[1], field)};
}

}  // namespace

DemoRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record is not an object");
  for (const char* f : {"t", "world_id", "episode_id", "scan", "goal", "a_star", "a_exec"})
    if (!j.contains(f)) throw ParseError(std::string("missing field '") + f + "'");
  DemoRecord r;
  r.t = finite_number(j["t"], "t");
  if (!j["world_id"].is_string()) throw ParseError("field 'world_id' is not a string");
  r.world_id = j["world_id"].get<std::string>();
  if (!j["episode_id"].is_number_integer()) throw ParseError("field 'episode_id' is not an integer");
  r.episode_id = j["episode_id"].get<int>();
  if (!j["scan"].is_array()) throw ParseError("field 'scan' is not an array");
  r.scan.reserve(j["scan"].size());
  for (const auto& x : j["scan"]) r.scan.push_back(finite_number(x, "scan"));
  const auto [gx, gy] = pair_field(j, "goal");
  r.goal = {gx, gy};
  if (std::abs(r.goal.norm() - 1.0) > 1e-6) throw ParseError("field 'goal' is not a unit vector");
  const auto [sv, sw] = pair_field(j, "a_star");
  r.a_star = {sv, sw};
  const auto [ev, ew] = pair_field(j, "a_exec");
  r.a_exec = {ev, ew};
  return r;
}

std::filesystem::path manifest_path(const std::filesystem::path& records_path) {
  std::filesystem::path p = records_path;
  p.replace_extension(".manifest.json");
  return p;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& records_path) {
  if (records_path.has_parent_path()) std::filesystem::create_directories(records_path.parent_path());
  std::ofstream out(records_path, std::ios::binary);
  if (!out) throw Error("cannot open " + records_path.string() + " for writing");
  for (const auto& r : dataset.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw Error("failed writing " + records_path.string());
  std::ofstream man(manifest_path(records_path), std::ios::binary);
  man << dataset.manifest.dump(2) << '\n';
  if (!man) throw Error("failed writing manifest for " + records_path.string());
}

Dataset read_dataset(const std::filesystem::path& records_path) {
  std::ifstream in(records_path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + records_path.string());
  Dataset ds;
  const auto mpath = manifest_path(records_path);
  if (std::filesystem::exists(mpath)) {
    std::ifstream man(mpath);
    try {
      ds.manifest = nlohmann::json::parse(man);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(mpath.string() + ": " + e.what());
    }
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::size_t h = ds.records.back().scan.size();
    if (h != ds.records.front().scan.size())
      throw SchemaMismatch(records_path.string() + ":" + std::to_string(line_no) +
                           ": scan length " + std::to_string(h) + " differs from first record");
  }
  if (ds.manifest.is_object() && ds.manifest.contains("scan_size") && !ds.records.empty() &&
      ds.manifest["scan_size"].get<std::size_t>() != ds.records.front().scan.size())
    throw SchemaMismatch(records_path.string() + ": scan length disagrees with manifest");
  return ds;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& records_path, nlohmann::json manifest)
    : path_(records_path), manifest_(std::move(manifest)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot open " + path_.string() + " for writing");
  manifest_["discarded"] = 0;
  write_manifest();
}

void DatasetWriter::append_episode(const std::vector<DemoRecord>& records, double duration) {
  if (records.empty()) return;
  for (const auto& r : records) out_ << record_to_json(r).dump() << '\n';
  out_.flush();
  count_ += records.size();

  const std::string& id = records.front().world_id;
  auto& worlds = manifest_["worlds"];
  auto it = std::find_if(worlds.begin(), worlds.end(),
                         [&](const nlohmann::json& w) { return w["id"] == id; });
  if (it == worlds.end()) {
    worlds.push_back({{"id", id}, {"attempts", 0}, {"skipped", false},
                      {"episodes", nlohmann::json::array()}});
    it = worlds.end() - 1;
  }
  (*it)["attempts"] = (*it)["attempts"].get<int>() + 1;
  (*it)["episodes"].push_back({{"episode_id", records.front().episode_id},
                               {"records", records.size()},
                               {"duration", duration}});
  manifest_["record_count"] = count_;
  write_manifest();
}

void DatasetWriter::discard_episode(const std::string& world_id, Outcome outcome) {
  manifest_["discarded"] = manifest_["discarded"].get<int>() + 1;
  manifest_["warnings"].push_back(
      {{"type", "EpisodeDiscarded"}, {"world_id", world_id}, {"outcome", to_string(outcome)}});
  write_manifest();
}

void DatasetWriter::write_manifest() const {
  std::ofstream man(manifest_path(path_), std::ios::binary | std::ios::trunc);
  man << manifest_.dump(2) << '\n';
  if (!man) throw Error("failed writing manifest for " + path_.string());
}

}  // namespace lics
