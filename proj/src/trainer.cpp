#include "lics/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "lics/error.hpp"

namespace lics {

namespace {

// Gradients are computed on fixed-size chunks and summed in chunk order, so
// results do not depend on the thread count.
constexpr std::size_t kChunk = 16;
constexpr std::size_t kEvalChunk = 256;

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  unsigned t = threads > 0 ? static_cast<unsigned>(threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  t = static_cast<unsigned>(std::min<std::size_t>(t, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned k = 0; k < t; ++k)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

std::vector<std::size_t> all_indices(const std::vector<DemoRecord>& records,
                                     const std::vector<std::size_t>& indices) {
  if (!indices.empty()) return indices;
  std::vector<std::size_t> out(records.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidConfig("learning_rate must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw InvalidConfig("validation_fraction must be in [0, 1)");
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json val = nlohmann::json::array();
  for (double v : validation_mse) val.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  return {{"train_mse", train_mse},
          {"validation_mse", val},
          {"best_epoch", best_epoch},
          {"best_validation_mse", best_validation_mse},
          {"baseline_mse", baseline_mse},
          {"wall_time", wall_time},
          {"train_records", train_records},
          {"validation_records", validation_records},
          {"checkpoint", checkpoint},
          {"aborted", aborted}};
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Batch<float> make_batch(const std::vector<DemoRecord>& records,
                        const std::vector<std::size_t>& indices, const ModelConfig& cfg) {
  const auto b = static_cast<Eigen::Index>(indices.size());
  Batch<float> batch;
  batch.scans.resize(b, cfg.scan_size);
  batch.goals.resize(b, 2);
  batch.targets.resize(b, 2);
  const double inv = 1.0 / cfg.max_range;
  for (Eigen::Index r = 0; r < b; ++r) {
    const DemoRecord& rec = records[indices[static_cast<std::size_t>(r)]];
    if (static_cast<int>(rec.scan.size()) != cfg.scan_size)
      throw SchemaMismatch("record scan length " + std::to_string(rec.scan.size()) +
                           " != model H " + std::to_string(cfg.scan_size));
    for (int i = 0; i < cfg.scan_size; ++i)
      batch.scans(r, i) = static_cast<float>(std::min(rec.scan[static_cast<std::size_t>(i)] * inv, 1.0));
    batch.goals(r, 0) = static_cast<float>(rec.goal.x());
    batch.goals(r, 1) = static_cast<float>(rec.goal.y());
    batch.targets(r, 0) = static_cast<float>(rec.a_star.v);
    batch.targets(r, 1) = static_cast<float>(rec.a_star.w);
  }
  return batch;
}

double evaluate_mse(const Model<float>& model, const std::vector<DemoRecord>& records,
                    const std::vector<std::size_t>& indices) {
  const auto idx = all_indices(records, indices);
  if (idx.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                        idx.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(idx.size(), start + kEvalChunk)));
    const Batch<float> batch = make_batch(records, part, model.config());
    const Matrix<float> pred = model.forward(batch.scans, batch.goals);
    sum += (pred - batch.targets).cast<double>().squaredNorm();
  }
  return sum / (2.0 * static_cast<double>(idx.size()));
}

double constant_predictor_mse(const std::vector<DemoRecord>& records,
                              const std::vector<std::size_t>& indices) {
  const auto idx = all_indices(records, indices);
  if (idx.empty()) return 0.0;
  double mv = 0.0, mw = 0.0;
  for (auto i : idx) {
    mv += records[i].a_star.v;
    mw += records[i].a_star.w;
  }
  mv /= static_cast<double>(idx.size());
  mw /= static_cast<double>(idx.size());
  double sum = 0.0;
  for (auto i : idx) {
    const double dv = records[i].a_star.v - mv;
    const double dw = records[i].a_star.w - mw;
    sum += dv * dv + dw * dw;
  }
  return sum / (2.0 * static_cast<double>(idx.size()));
}

TrainResult train(const std::vector<DemoRecord>& records, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::function<void(int, double, double)>& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (records.empty()) throw InvalidConfig("training dataset is empty");
  for (const auto& r : records)
    if (static_cast<int>(r.scan.size()) != model_cfg.scan_size)
      throw SchemaMismatch("dataset H " + std::to_string(r.scan.size()) + " != model H " +
                           std::to_string(model_cfg.scan_size));

  const auto t0 = std::chrono::steady_clock::now();
  Model<float> model = Model<float>::initialized(model_cfg, derive_seed(cfg.seed, 1));

  const std::size_t n = records.size();
  const auto perm = shuffled_indices(n, derive_seed(cfg.seed, 2));
  std::size_t n_val = n >= 2 ? static_cast<std::size_t>(std::llround(static_cast<double>(n) *
                                                                      cfg.validation_fraction))
                             : 0;
  n_val = std::min(n_val, n - 1);
  std::vector<std::size_t> val_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  TrainReport report;
  report.train_records = train_idx.size();
  report.validation_records = val_idx.size();
  report.baseline_mse = constant_predictor_mse(records, train_idx);
  if (cfg.checkpoint) report.checkpoint = cfg.checkpoint->string();

  ParamSet<float> m1 = model.params().zeros_like();
  ParamSet<float> m2 = model.params().zeros_like();
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto b1 = static_cast<float>(cfg.beta1);
  const auto b2 = static_cast<float>(cfg.beta2);
  const auto eps = static_cast<float>(cfg.adam_epsilon);
  std::int64_t step = 0;

  Model<float> best = model;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs && !report.aborted; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    {
      const auto p = shuffled_indices(order.size(), derive_seed(cfg.seed, 3, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = train_idx[p[i]];
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bsize = end - start;
      const std::size_t chunks = (bsize + kChunk - 1) / kChunk;
      std::vector<LossGradient<float>> parts(chunks);
      std::vector<std::exception_ptr> errors(chunks);
      parallel_for(chunks, cfg.threads, [&](std::size_t c) {
        const std::size_t s = start + c * kChunk;
        const std::size_t e = std::min(end, s + kChunk);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s),
                                     order.begin() + static_cast<std::ptrdiff_t>(e));
        try {
          parts[c] = model.backward(make_batch(records, idx, model_cfg));
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
      bool finite = true;
      for (std::size_t c = 0; c < chunks; ++c) {
        if (!errors[c]) continue;
        try {
          std::rethrow_exception(errors[c]);
        } catch (const NonFiniteLoss&) {
          finite = false;
        }
      }
      ParamSet<float> grad = model.params().zeros_like();
      double loss = 0.0;
      if (finite) {
        for (std::size_t c = 0; c < chunks; ++c) {
          const std::size_t s = start + c * kChunk;
          const float w = static_cast<float>(std::min(end, s + kChunk) - s) / static_cast<float>(bsize);
          loss += static_cast<double>(w) * parts[c].loss;
          for (std::size_t t = 0; t < grad.size(); ++t)
            grad.tensors()[t].value += w * parts[c].grads.tensors()[t].value;
        }
        finite = std::isfinite(loss);
      }
      if (!finite) {
        report.aborted = true;
        break;
      }

      ++step;
      const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
      const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
      for (std::size_t t = 0; t < grad.size(); ++t) {
        auto& p = model.params().tensors()[t].value;
        auto& g = grad.tensors()[t].value;
        auto& m = m1.tensors()[t].value;
        auto& v = m2.tensors()[t].value;
        m = b1 * m + (1.0f - b1) * g;
        v = b2 * v + (1.0f - b2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      }
    }
    if (report.aborted) break;
    if (!model.params().all_finite()) {
      report.aborted = true;
      break;
    }

    const double tr = evaluate_mse(model, records, train_idx);
    const double va = val_idx.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : evaluate_mse(model, records, val_idx);
    report.train_mse.push_back(tr);
    report.validation_mse.push_back(va);
    const bool improved = val_idx.empty() || va < best_val;
    if (improved) {
      best_val = val_idx.empty() ? tr : va;
      best = model;
      report.best_epoch = epoch;
      report.best_validation_mse = best_val;
      if (cfg.checkpoint) save_checkpoint(best, *cfg.checkpoint);
    }
    if (on_epoch) on_epoch(epoch, tr, va);
  }
  if (report.best_epoch < 0 && cfg.checkpoint) save_checkpoint(best, *cfg.checkpoint);

  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best), std::move(report)};
}

}  // namespace lics
