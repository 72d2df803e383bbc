#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "lics/error.hpp"
#include "lics/geometry.hpp"
#include "lics/trainer.hpp"
#include "oracles.hpp"

using namespace lics;

namespace {

std::vector<DemoRecord> synthetic(int n, int scan_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0), angle(-3.0, 3.0), act(-1.0, 1.0);
  std::vector<DemoRecord> out;
  for (int i = 0; i < n; ++i) {
    DemoRecord r;
    r.world_id = "w";
    r.t = 0.1 * i;
    for (int k = 0; k < scan_size; ++k) r.scan.push_back(u01(rng));
    const double a = angle(rng);
    r.goal = {std::cos(a), std::sin(a)};
    r.a_star = {act(rng), act(rng)};
    r.a_exec = {act(rng), act(rng)};
    out.push_back(std::move(r));
  }
  return out;
}

bool same_params(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a.tensors()[i].value == b.tensors()[i].value)) return false;
  return true;
}

TrainConfig quick(int epochs, double lr = 1e-3) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.batch_size = 10;
  cfg.seed = 5;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("zero learning rate is a fixed point") {
  const auto records = synthetic(20, 24, 1);
  const auto mc = ModelConfig::tiny();
  const auto cfg = quick(1, 0.0);
  const auto result = train(records, mc, cfg);
  CHECK(same_params(result.model.params(), Model<float>::initialized(mc, derive_seed(cfg.seed, 1)).params()));
}

TEST_CASE("overfits ten records") {
  for (auto variant : {ModelVariant::kTransformer, ModelVariant::kMlp}) {
    const auto records = synthetic(10, 24, 2);
    auto cfg = quick(2000, 3e-3);
    cfg.validation_fraction = 0.0;
    const auto result = train(records, ModelConfig::tiny(variant), cfg);
    CHECK(result.report.train_mse.back() < 1e-3);
    CHECK(evaluate_mse(result.model, records) == doctest::Approx(result.report.train_mse.back()));
  }
}

TEST_CASE("targets are a_star only") {
  auto records = synthetic(30, 24, 3);
  const auto a = train(records, ModelConfig::tiny(), quick(3));
  for (auto& r : records) r.a_exec = {9.0, -9.0};
  const auto b = train(records, ModelConfig::tiny(), quick(3));
  CHECK(same_params(a.model.params(), b.model.params()));
  const auto batch = make_batch(records, {0, 1}, ModelConfig::tiny());
  CHECK(batch.targets(1, 0) == static_cast<float>(records[1].a_star.v));
  CHECK(batch.targets(1, 1) == static_cast<float>(records[1].a_star.w));
}

TEST_CASE("training is deterministic and keeps the best validation model") {
  const auto dir = std::filesystem::temp_directory_path() / "lics_trainer_test";
  std::filesystem::create_directories(dir);
  const auto records = synthetic(60, 24, 4);
  auto cfg = quick(8);
  cfg.checkpoint = dir / "a.ckpt";
  const auto a = train(records, ModelConfig::tiny(), cfg);
  cfg.checkpoint = dir / "b.ckpt";
  cfg.threads = 2;
  const auto b = train(records, ModelConfig::tiny(), cfg);
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string sa(std::istreambuf_iterator<char>(fa), {}), sb(std::istreambuf_iterator<char>(fb), {});
  CHECK_FALSE(sa.empty());
  CHECK(sa == sb);
  CHECK(a.report.train_mse == b.report.train_mse);

  const auto& r = a.report;
  CHECK(r.train_mse.size() == 8u);
  CHECK(r.validation_mse.size() == 8u);
  CHECK(r.train_records + r.validation_records == 60u);
  CHECK(r.validation_records == 6u);
  CHECK(r.best_validation_mse <= r.validation_mse.back());
  CHECK(r.best_validation_mse == r.validation_mse[static_cast<std::size_t>(r.best_epoch)]);
  const auto j = r.to_json();
  CHECK(j["train_mse"].size() == 8u);
  CHECK(j.contains("baseline_mse"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluation") {
  const auto records = synthetic(12, 24, 6);
  const auto model = Model<float>::initialized(ModelConfig::tiny(), 1);
  CHECK(evaluate_mse(model, records) == evaluate_mse(model, records));
  const std::vector<DemoRecord> same(5, records[0]);
  CHECK(evaluate_mse(model, same) == doctest::Approx(evaluate_mse(model, {records[0]})).epsilon(1e-6));

  std::vector<Action> targets;
  for (const auto& r : records) targets.push_back(r.a_star);
  CHECK(constant_predictor_mse(records) == doctest::Approx(oracle::target_variance(targets)).epsilon(1e-12));

  auto wrong = records;
  wrong[3].scan.pop_back();
  CHECK_THROWS_AS(evaluate_mse(model, wrong), SchemaMismatch);
  CHECK_THROWS_AS(train(wrong, ModelConfig::tiny(), quick(1)), SchemaMismatch);
  CHECK_THROWS_AS(train({}, ModelConfig::tiny(), quick(1)), InvalidConfig);
}

TEST_CASE("shuffles are permutations") {
  const auto p = shuffled_indices(100, 3);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
  CHECK(p == shuffled_indices(100, 3));
  CHECK(p != shuffled_indices(100, 4));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = TrainConfig{};
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}

}
