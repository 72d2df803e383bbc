#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace lics {

enum class ModelVariant { kTransformer, kMlp };

std::string to_string(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

struct ModelConfig {
  ModelVariant variant = ModelVariant::kTransformer;
  int scan_size = 720;    // H
  int patch_count = 20;   // N; patch length D = H / N
  int d_model = 128;
  int heads = 4;
  int d_ff = 256;
  int encoder_layers = 3;
  int decoder_layers = 3;
  int mlp_hidden = 512;
  int mlp_layers = 3;
  double max_range = 20.0;  // scans are divided by this before the network

  int patch_size() const { return scan_size / patch_count; }
  void validate() const;

  /// H=24, N=4, d_model=8, 2 heads; used by gradient checks.
  static ModelConfig tiny(ModelVariant variant = ModelVariant::kTransformer);

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct Tensor {
  std::string name;
  Matrix<Scalar> value;
};

/// Named parameter tensors in a fixed registration order.
template <typename Scalar>
class ParamSet {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    tensors_.push_back({std::move(name), Matrix<Scalar>::Zero(rows, cols)});
    return static_cast<int>(tensors_.size()) - 1;
  }

  Matrix<Scalar>& operator[](int i) { return tensors_[static_cast<std::size_t>(i)].value; }
  const Matrix<Scalar>& operator[](int i) const {
    return tensors_[static_cast<std::size_t>(i)].value;
  }
  std::vector<Tensor<Scalar>>& tensors() { return tensors_; }
  const std::vector<Tensor<Scalar>>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }
  ParamSet zeros_like() const {
    ParamSet out = *this;
    for (auto& t : out.tensors_) t.value.setZero();
    return out;
  }
  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.value.allFinite()) return false;
    return true;
  }
  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& t : tensors_) {
      const int i = out.add(t.name, t.value.rows(), t.value.cols());
      out[i] = t.value.template cast<Other>();
    }
    return out;
  }

 private:
  std::vector<Tensor<Scalar>> tensors_;
};

/// Training pairs: normalized scans (B x H), unit goals (B x 2), targets (B x 2).
template <typename Scalar>
struct Batch {
  Matrix<Scalar> scans;
  Matrix<Scalar> goals;
  Matrix<Scalar> targets;

  Eigen::Index size() const { return scans.rows(); }
};

/// Row-major reshape of an H-vector into N x (H/N) patches.
template <typename Scalar>
Matrix<Scalar> patchify(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& scan,
                        int patch_count);

/// Mean over all elements of the squared error.
template <typename Scalar>
Scalar mse_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target);

template <typename Scalar>
struct LossGradient {
  Scalar loss = 0;
  ParamSet<Scalar> grads;
  Matrix<Scalar> predictions;
};

/// Transformer (encoder over LiDAR patches, single-token cross-attention
/// decoder over the goal) or the MLP ablation, selected by config.variant.
template <typename Scalar>
class Model {
 public:
  explicit Model(ModelConfig cfg);

  /// Uniform fan-in weights, zero biases, unit norms, N(0, 0.02) positions.
  static Model initialized(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamSet<Scalar>& params() { return params_; }
  const ParamSet<Scalar>& params() const { return params_; }

  /// B x 2 actions (v, w) for normalized scans and unit goals.
  Matrix<Scalar> forward(const Matrix<Scalar>& scans, const Matrix<Scalar>& goals) const;

  /// MSE loss against batch.targets and its gradient for every parameter.
  LossGradient<Scalar> backward(const Batch<Scalar>& batch) const;

  template <typename Other>
  Model<Other> cast() const {
    Model<Other> out(cfg_);
    out.params() = params_.template cast<Other>();
    return out;
  }

 private:
  void check_inputs(const Matrix<Scalar>& scans, const Matrix<Scalar>& goals) const;

  ModelConfig cfg_;
  ParamSet<Scalar> params_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int samples = 0;
  std::string worst_tensor;
};

/// Fourth-order central finite differences on `samples` random scalars (at least one per
/// tensor). Relative error |ga - gfd| / max(|ga|, |gfd|, 1e-8). `tamper`
/// lets a test corrupt the analytic gradient before comparison.
GradCheckResult grad_check(const Model<double>& model, const Batch<double>& batch, double step,
                           int samples = 128, std::uint64_t seed = 0,
                           const std::function<void(ParamSet<double>&)>& tamper = {});

/// JSON header line (config + tensor directory) followed by little-endian float32 data.
template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path);

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::filesystem::path& path);

}  // namespace lics
