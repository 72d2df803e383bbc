#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "lics/demo.hpp"
#include "lics/error.hpp"
#include "lics/session.hpp"
#include "experiments.hpp"
#include "fixtures.hpp"

using namespace lics;

using fixture::blocked_box;
using fixture::open_box;

namespace {

SessionConfig quick_session(double timeout = 20.0) {
  SessionConfig cfg;
  cfg.timeout = timeout;
  return cfg;
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("outcomes") {
  const World world = open_box("box", 3.0);
  {
    NavSession s(world, quick_session());
    Outcome o = Outcome::kRunning;
    for (int i = 0; i < 100 && o == Outcome::kRunning; ++i) {
      s.observe();
      o = s.apply({1.0, 0.0});
    }
    CHECK(o == Outcome::kSuccess);
    CHECK(std::abs(s.state().pose.y - world.goal.y()) <= 0.3 + 1e-9);
    CHECK(s.apply({1.0, 0.0}) == Outcome::kSuccess);
  }
  {
    NavSession s(world, quick_session());
    Outcome o = Outcome::kRunning;
    for (int i = 0; i < 100 && o == Outcome::kRunning; ++i) o = s.apply({-1.0, 0.0});
    CHECK(o == Outcome::kCollision);
  }
  {
    NavSession s(world, quick_session(1.0));
    Outcome o = Outcome::kRunning;
    for (int i = 0; i < 100 && o == Outcome::kRunning; ++i) o = s.apply({0.0, 0.0});
    CHECK(o == Outcome::kTimeout);
    CHECK(s.ticks() == 10);
  }
}

TEST_CASE("observation contents") {
  const World world = open_box("box", 3.0);
  NavSession s(world, quick_session());
  const Observation obs = s.observe();
  CHECK(obs.scan.size() == 720u);
  CHECK(obs.goal.unit.norm() == doctest::Approx(1.0).epsilon(1e-12));
  // Goal is straight ahead of the start heading.
  CHECK(obs.goal.unit.x() == doctest::Approx(1.0).epsilon(1e-9));
  REQUIRE_FALSE(obs.path.empty());
  CHECK((obs.path.back() - Vec2(3.0, 0.0)).norm() < 1e-9);
  s.apply({0.5, 0.2});
  s.reset();
  CHECK(s.state().pose == world.start);
  CHECK(s.ticks() == 0);
  CHECK(s.outcome() == Outcome::kRunning);
}

TEST_CASE("invalid config") {
  SessionConfig cfg;
  cfg.goal_tolerance = 0.0;
  CHECK_THROWS_AS(NavSession(open_box("box", 3.0), cfg), InvalidConfig);
}

}

TEST_SUITE("demo") {

TEST_CASE("perturbation") {
  std::mt19937_64 rng(1);
  const VelocityLimits lim;
  const Action a{0.7, -0.3};
  CHECK(perturb_action(a, 0.0, lim, rng) == a);
  std::mt19937_64 fresh(1);
  CHECK(rng == fresh);  // no draw consumed at sigma 0

  int clamped = 0;
  for (int i = 0; i < 100; ++i) {
    const Action out = perturb_action({2.0, 0.0}, 0.25, lim, rng);
    CHECK(out.v <= 2.0);
    clamped += out.v == 2.0;
  }
  CHECK(clamped > 30);
}

TEST_CASE("noise statistics before clamping") {
  const auto r = experiment::noise_statistics(10000, 0.25, 2024);
  CHECK(std::abs(r.mean_v) <= 0.01);
  CHECK(std::abs(r.mean_w) <= 0.01);
  CHECK(std::abs(r.std_v - 0.25) <= 0.01);
  CHECK(std::abs(r.std_w - 0.25) <= 0.01);
}


TEST_CASE("clean episode to a goal 4 m ahead at 1 m/s") {
  const World world = open_box("box", 4.0);
  const DwaExpert expert;
  SessionConfig session = quick_session();
  session.limits.v_max = 1.0;
  const EpisodeResult ep = record_episode(world, expert, {0.0, 1}, session);
  CHECK(ep.outcome == Outcome::kSuccess);
  CHECK(ep.duration == doctest::Approx(4.0 / 1.0).epsilon(0.25));
  REQUIRE_FALSE(ep.records.empty());
  CHECK(std::abs(static_cast<double>(ep.records.size()) * kControlPeriod - ep.duration) < kControlPeriod + 1e-9);
  for (const auto& r : ep.records) {
    CHECK(r.a_exec == r.a_star);
    CHECK(r.goal.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.world_id == "box");
  }
}

TEST_CASE("noisy records keep the expert action") {
  const World world = open_box("box", 4.0);
  const DwaExpert expert;
  const EpisodeResult ep = record_episode(world, expert, {0.25, 3}, quick_session());
  NavSession replay(world, quick_session());
  int differing = 0;
  for (const auto& r : ep.records) {
    const Observation obs = replay.observe();
    CHECK(obs.scan == r.scan);
    CHECK(expert.act(obs) == r.a_star);
    differing += !(r.a_exec == r.a_star);
    replay.apply(r.a_exec);
  }
  CHECK(differing > 0);
  CHECK(replay.outcome() == ep.outcome);
}

TEST_CASE("blocked world ends without success and still returns records") {
  const DwaExpert expert;
  const EpisodeResult ep = record_episode(blocked_box(), expert, {0.25, 1}, quick_session(5.0));
  CHECK(ep.outcome != Outcome::kSuccess);
  CHECK_FALSE(ep.records.empty());
}

TEST_CASE("episodes are deterministic") {
  const World world = open_box("box", 4.0);
  const DwaExpert expert;
  const auto a = record_episode(world, expert, {0.25, 11}, quick_session());
  const auto b = record_episode(world, expert, {0.25, 11}, quick_session());
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i)
    CHECK(record_to_json(a.records[i]).dump() == record_to_json(b.records[i]).dump());
}

TEST_CASE("dataset bookkeeping") {
  std::vector<World> worlds{open_box("a", 3.0), open_box("b", 3.5), open_box("c", 4.0)};
  DatasetConfig cfg;
  cfg.seed = 4;
  cfg.session = quick_session();
  cfg.threads = 2;
  const DwaExpert expert;
  const Dataset ds = build_dataset(worlds, expert, cfg);
  std::size_t episodes = 0, records = 0;
  for (const auto& w : ds.manifest["worlds"]) {
    CHECK(w["skipped"] == false);
    for (const auto& e : w["episodes"]) {
      ++episodes;
      records += e["records"].get<std::size_t>();
    }
  }
  CHECK(episodes == 6);
  CHECK(records == ds.records.size());
  CHECK(ds.manifest["record_count"] == ds.records.size());

  cfg.threads = 1;
  const Dataset again = build_dataset(worlds, expert, cfg);
  CHECK(again.manifest == ds.manifest);

  worlds.insert(worlds.begin() + 1, blocked_box());
  cfg.retry_budget = 2;
  cfg.session.timeout = 8.0;
  const Dataset partial = build_dataset(worlds, expert, cfg);
  CHECK(partial.manifest["worlds"][1]["skipped"] == true);
  CHECK(partial.manifest["warnings"].size() == 1);
  CHECK(partial.manifest["warnings"][0]["type"] == "WorldSkipped");
}

TEST_CASE("dataset files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "lics_demo_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  DatasetConfig cfg;
  cfg.session = quick_session();
  cfg.episodes_per_world = 1;
  const Dataset ds = build_dataset({open_box("a", 3.0)}, DwaExpert{}, cfg);
  const auto path = dir / "d.ndjson";
  write_dataset(ds, path);
  CHECK(std::filesystem::exists(manifest_path(path)));
  const Dataset back = read_dataset(path);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    CHECK(record_to_json(back.records[i]) == record_to_json(ds.records[i]));

  std::ofstream(dir / "bad.ndjson") << "{\"t\": 0}\n";
  CHECK_THROWS_AS(read_dataset(dir / "bad.ndjson"), ParseError);
  std::filesystem::remove_all(dir);
}

}
