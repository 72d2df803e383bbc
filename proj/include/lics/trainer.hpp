#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lics/demo.hpp"
#include "lics/model.hpp"

namespace lics {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 50;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;          // initialization and shuffling
  double validation_fraction = 0.1;
  std::optional<std::filesystem::path> checkpoint;  // best-validation model is written here
  int threads = 0;                 // 0 = hardware concurrency

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_mse;       // evaluated after each epoch
  std::vector<double> validation_mse;  // empty entries when no validation split
  int best_epoch = -1;
  double best_validation_mse = 0.0;
  double baseline_mse = 0.0;  // constant mean-action predictor on the training split
  double wall_time = 0.0;     // s
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  std::string checkpoint;
  bool aborted = false;  // a non-finite loss stopped training

  nlohmann::json to_json() const;
};

struct TrainResult {
  Model<float> model;
  TrainReport report;
};

/// Converts records into network inputs: scans / max_range, unit goals, a_star targets.
Batch<float> make_batch(const std::vector<DemoRecord>& records,
                        const std::vector<std::size_t>& indices, const ModelConfig& cfg);

/// Mean squared error over the given records; no parameter is modified.
double evaluate_mse(const Model<float>& model, const std::vector<DemoRecord>& records,
                    const std::vector<std::size_t>& indices = {});

/// Mean squared error of always predicting the mean a_star of the slice.
double constant_predictor_mse(const std::vector<DemoRecord>& records,
                              const std::vector<std::size_t>& indices = {});

/// Adam on mse_loss(forward(scan, goal), a_star). Keeps the best-validation
/// parameters (the last epoch's when there is no validation split).
TrainResult train(const std::vector<DemoRecord>& records, const ModelConfig& model_cfg,
                  const TrainConfig& cfg,
                  const std::function<void(int, double, double)>& on_epoch = {});

/// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace lics
