#include "lics/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "lics/error.hpp"

namespace lics {

std::string to_string(ModelVariant v) {
  return v == ModelVariant::kMlp ? "mlp" : "transformer";
}

ModelVariant parse_variant(const std::string& name) {
  if (name == "transformer") return ModelVariant::kTransformer;
  if (name == "mlp") return ModelVariant::kMlp;
  throw InvalidConfig("unknown model variant '" + name + "'");
}

void ModelConfig::validate() const {
  if (scan_size < 1 || patch_count < 1 || scan_size % patch_count != 0)
    throw ShapeMismatch("patch_count must divide scan_size");
  if (variant == ModelVariant::kTransformer) {
    if (d_model < 1 || heads < 1 || d_model % heads != 0)
      throw InvalidConfig("d_model must be divisible by heads");
    if (d_ff < 1 || encoder_layers < 1 || decoder_layers < 1)
      throw InvalidConfig("transformer dimensions must be positive");
  } else if (mlp_hidden < 1 || mlp_layers < 1) {
    throw InvalidConfig("mlp dimensions must be positive");
  }
  if (!(max_range > 0.0)) throw InvalidConfig("max_range must be > 0");
}

ModelConfig ModelConfig::tiny(ModelVariant variant) {
  ModelConfig c;
  c.variant = variant;
  c.scan_size = 24;
  c.patch_count = 4;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 16;
  c.mlp_hidden = 12;
  c.max_range = 1.0;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)}, {"scan_size", scan_size},
          {"patch_count", patch_count},    {"d_model", d_model},
          {"heads", heads},                {"d_ff", d_ff},
          {"encoder_layers", encoder_layers}, {"decoder_layers", decoder_layers},
          {"mlp_hidden", mlp_hidden},      {"mlp_layers", mlp_layers},
          {"max_range", max_range}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.scan_size = j.at("scan_size").get<int>();
  c.patch_count = j.at("patch_count").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.mlp_layers = j.at("mlp_layers").get<int>();
  c.max_range = j.at("max_range").get<double>();
  c.validate();
  return c;
}

template <typename Scalar>
Matrix<Scalar> patchify(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>& scan,
                        int patch_count) {
  const auto h = scan.size();
  if (patch_count < 1 || h % patch_count != 0)
    throw ShapeMismatch("patch count " + std::to_string(patch_count) + " does not divide " +
                        std::to_string(h));
  const Eigen::Index d = h / patch_count;
  Matrix<Scalar> out(patch_count, d);
  for (Eigen::Index i = 0; i < patch_count; ++i) out.row(i) = scan.segment(i * d, d);
  return out;
}

template <typename Scalar>
Scalar mse_loss(const Matrix<Scalar>& pred, const Matrix<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeMismatch("mse_loss shape mismatch");
  if (pred.size() == 0) return Scalar(0);
  return (pred - target).squaredNorm() / static_cast<Scalar>(pred.size());
}

namespace {

template <typename S>
using Mat = Matrix<S>;

struct LinearIdx {
  int w = -1;
  int b = -1;
};
struct NormIdx {
  int gamma = -1;
  int beta = -1;
};
struct AttnIdx {
  LinearIdx q, k, v, o;
};
struct BlockIdx {
  NormIdx ln1;
  AttnIdx attn;
  NormIdx ln2;
  LinearIdx ff1, ff2;
};

struct Layout {
  // transformer
  LinearIdx patch;
  int pos = -1;
  std::vector<BlockIdx> encoder;
  NormIdx encoder_norm;
  LinearIdx goal;
  std::vector<BlockIdx> decoder;
  NormIdx decoder_norm;
  // mlp
  std::vector<LinearIdx> mlp;
  LinearIdx head;
};

template <typename S>
Layout make_layout(const ModelConfig& cfg, ParamSet<S>& ps) {
  Layout L;
  auto linear = [&](const std::string& name, int in, int out) {
    return LinearIdx{ps.add(name + ".weight", in, out), ps.add(name + ".bias", 1, out)};
  };
  auto norm = [&](const std::string& name, int dim) {
    return NormIdx{ps.add(name + ".gamma", 1, dim), ps.add(name + ".beta", 1, dim)};
  };
  auto block = [&](const std::string& name) {
    const int d = cfg.d_model;
    BlockIdx b;
    b.ln1 = norm(name + ".ln1", d);
    b.attn.q = linear(name + ".attn.q", d, d);
    b.attn.k = linear(name + ".attn.k", d, d);
    b.attn.v = linear(name + ".attn.v", d, d);
    b.attn.o = linear(name + ".attn.o", d, d);
    b.ln2 = norm(name + ".ln2", d);
    b.ff1 = linear(name + ".ff1", d, cfg.d_ff);
    b.ff2 = linear(name + ".ff2", cfg.d_ff, d);
    return b;
  };

  if (cfg.variant == ModelVariant::kTransformer) {
    L.patch = linear("patch_embed", cfg.patch_size(), cfg.d_model);
    L.pos = ps.add("pos_embed", cfg.patch_count, cfg.d_model);
    for (int i = 0; i < cfg.encoder_layers; ++i)
      L.encoder.push_back(block("encoder." + std::to_string(i)));
    L.encoder_norm = norm("encoder.norm", cfg.d_model);
    L.goal = linear("goal_embed", 2, cfg.d_model);
    for (int i = 0; i < cfg.decoder_layers; ++i)
      L.decoder.push_back(block("decoder." + std::to_string(i)));
    L.decoder_norm = norm("decoder.norm", cfg.d_model);
    L.head = linear("head", cfg.d_model, 2);
  } else {
    int in = cfg.scan_size + 2;
    for (int i = 0; i < cfg.mlp_layers; ++i) {
      L.mlp.push_back(linear("mlp." + std::to_string(i), in, cfg.mlp_hidden));
      in = cfg.mlp_hidden;
    }
    L.head = linear("head", in, 2);
  }
  return L;
}

Layout layout_of(const ModelConfig& cfg) {
  ParamSet<float> scratch;
  return make_layout(cfg, scratch);
}

// ---- primitive layers -------------------------------------------------------

template <typename S>
Mat<S> linear_fwd(const Mat<S>& x, const ParamSet<S>& p, const LinearIdx& l) {
  Mat<S> y = x * p[l.w];
  y.rowwise() += p[l.b].row(0);
  return y;
}

template <typename S>
Mat<S> linear_bwd(const Mat<S>& x, const ParamSet<S>& p, const LinearIdx& l, const Mat<S>& dy,
                  ParamSet<S>& g, bool need_dx = true) {
  g[l.w].noalias() += x.transpose() * dy;
  g[l.b] += dy.colwise().sum();
  if (!need_dx) return {};
  return dy * p[l.w].transpose();
}

template <typename S>
struct NormCache {
  Mat<S> xhat;
  Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
};

constexpr double kNormEps = 1e-5;

template <typename S>
Mat<S> norm_fwd(const Mat<S>& x, const ParamSet<S>& p, const NormIdx& n, NormCache<S>& c) {
  const auto cols = static_cast<S>(x.cols());
  Eigen::Matrix<S, Eigen::Dynamic, 1> mean = x.rowwise().sum() / cols;
  c.xhat = x.colwise() - mean;
  Eigen::Matrix<S, Eigen::Dynamic, 1> var = c.xhat.array().square().rowwise().sum() / cols;
  c.rstd = (var.array() + static_cast<S>(kNormEps)).rsqrt();
  c.xhat = c.rstd.asDiagonal() * c.xhat;
  Mat<S> y = c.xhat.array().rowwise() * p[n.gamma].row(0).array();
  y.rowwise() += p[n.beta].row(0);
  return y;
}

template <typename S>
Mat<S> norm_bwd(const Mat<S>& dy, const ParamSet<S>& p, const NormIdx& n, const NormCache<S>& c,
                ParamSet<S>& g) {
  const auto cols = static_cast<S>(dy.cols());
  g[n.gamma] += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g[n.beta] += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * p[n.gamma].row(0).array();
  Eigen::Matrix<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().sum() / cols;
  Eigen::Matrix<S, Eigen::Dynamic, 1> m2 =
      (dxhat.array() * c.xhat.array()).rowwise().sum().matrix() / cols;
  Mat<S> dx = dxhat.colwise() - m1;
  dx -= (c.xhat.array().colwise() * m2.array()).matrix();
  return c.rstd.asDiagonal() * dx;
}

template <typename S>
S gelu(S x) {
  constexpr S k = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  return S(0.5) * x * (S(1) + std::tanh(k * (x + S(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  constexpr S k = static_cast<S>(0.7978845608028654);
  const S t = std::tanh(k * (x + S(0.044715) * x * x * x));
  return S(0.5) * (S(1) + t) +
         S(0.5) * x * (S(1) - t * t) * k * (S(1) + S(3) * S(0.044715) * x * x);
}

// ---- attention --------------------------------------------------------------

template <typename S>
struct AttnCache {
  Mat<S> q, k, v, o;
  std::vector<Mat<S>> probs;  // batch * heads, each nq x nk
};

template <typename S>
Mat<S> attn_fwd(const Mat<S>& hq, const Mat<S>& hkv, Eigen::Index batch, Eigen::Index nq,
                Eigen::Index nk, int heads, const ParamSet<S>& p, const AttnIdx& a,
                AttnCache<S>& c) {
  c.q = linear_fwd(hq, p, a.q);
  c.k = linear_fwd(hkv, p, a.k);
  c.v = linear_fwd(hkv, p, a.v);
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  c.o.resize(batch * nq, d);
  c.probs.resize(static_cast<std::size_t>(batch * heads));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qh = c.q.block(b * nq, h * dk, nq, dk);
      auto kh = c.k.block(b * nk, h * dk, nk, dk);
      auto vh = c.v.block(b * nk, h * dk, nk, dk);
      Mat<S>& pr = c.probs[static_cast<std::size_t>(b * heads + h)];
      pr.noalias() = (qh * kh.transpose()) * scale;
      for (Eigen::Index r = 0; r < nq; ++r) {
        const S mx = pr.row(r).maxCoeff();
        pr.row(r) = (pr.row(r).array() - mx).exp();
        pr.row(r) /= pr.row(r).sum();
      }
      c.o.block(b * nq, h * dk, nq, dk).noalias() = pr * vh;
    }
  }
  return linear_fwd(c.o, p, a.o);
}

// Returns (d hq, d hkv).
template <typename S>
std::pair<Mat<S>, Mat<S>> attn_bwd(const Mat<S>& dout, const Mat<S>& hq, const Mat<S>& hkv,
                                   Eigen::Index batch, Eigen::Index nq, Eigen::Index nk,
                                   int heads, const ParamSet<S>& p, const AttnIdx& a,
                                   const AttnCache<S>& c, ParamSet<S>& g) {
  const Mat<S> d_o = linear_bwd(c.o, p, a.o, dout, g);
  const Eigen::Index d = c.q.cols();
  const Eigen::Index dk = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dk));
  Mat<S> dq = Mat<S>::Zero(c.q.rows(), d);
  Mat<S> dk_ = Mat<S>::Zero(c.k.rows(), d);
  Mat<S> dv = Mat<S>::Zero(c.v.rows(), d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qh = c.q.block(b * nq, h * dk, nq, dk);
      auto kh = c.k.block(b * nk, h * dk, nk, dk);
      auto vh = c.v.block(b * nk, h * dk, nk, dk);
      auto doh = d_o.block(b * nq, h * dk, nq, dk);
      const Mat<S>& pr = c.probs[static_cast<std::size_t>(b * heads + h)];
      Mat<S> dp = doh * vh.transpose();
      dv.block(b * nk, h * dk, nk, dk).noalias() += pr.transpose() * doh;
      const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = (dp.array() * pr.array()).rowwise().sum();
      Mat<S> ds = pr.array() * (dp.colwise() - dot).array();
      ds *= scale;
      dq.block(b * nq, h * dk, nq, dk).noalias() += ds * kh;
      dk_.block(b * nk, h * dk, nk, dk).noalias() += ds.transpose() * qh;
    }
  }
  Mat<S> dhq = linear_bwd(hq, p, a.q, dq, g);
  Mat<S> dhkv = linear_bwd(hkv, p, a.k, dk_, g);
  dhkv += linear_bwd(hkv, p, a.v, dv, g);
  return {std::move(dhq), std::move(dhkv)};
}

// ---- pre-norm residual block ------------------------------------------------

template <typename S>
struct BlockCache {
  Mat<S> x0, h1, x1, h2, u, act;
  NormCache<S> ln1, ln2;
  AttnCache<S> attn;
};

// memory == nullptr means self-attention.
template <typename S>
Mat<S> block_fwd(const Mat<S>& x0, const Mat<S>* memory, Eigen::Index batch, Eigen::Index nq,
                 Eigen::Index nk, int heads, const ParamSet<S>& p, const BlockIdx& bi,
                 BlockCache<S>& c) {
  c.x0 = x0;
  c.h1 = norm_fwd(x0, p, bi.ln1, c.ln1);
  const Mat<S>& kv = memory ? *memory : c.h1;
  c.x1 = x0 + attn_fwd(c.h1, kv, batch, nq, nk, heads, p, bi.attn, c.attn);
  c.h2 = norm_fwd(c.x1, p, bi.ln2, c.ln2);
  c.u = linear_fwd(c.h2, p, bi.ff1);
  c.act = c.u.unaryExpr([](S x) { return gelu(x); });
  return c.x1 + linear_fwd(c.act, p, bi.ff2);
}

template <typename S>
Mat<S> block_bwd(const Mat<S>& dx2, const Mat<S>* memory, Mat<S>* dmemory, Eigen::Index batch,
                 Eigen::Index nq, Eigen::Index nk, int heads, const ParamSet<S>& p,
                 const BlockIdx& bi, const BlockCache<S>& c, ParamSet<S>& g) {
  Mat<S> dact = linear_bwd(c.act, p, bi.ff2, dx2, g);
  Mat<S> du = dact.array() * c.u.unaryExpr([](S x) { return gelu_grad(x); }).array();
  Mat<S> dh2 = linear_bwd(c.h2, p, bi.ff1, du, g);
  Mat<S> dx1 = dx2 + norm_bwd(dh2, p, bi.ln2, c.ln2, g);
  const Mat<S>& kv = memory ? *memory : c.h1;
  auto [dh1, dkv] = attn_bwd(dx1, c.h1, kv, batch, nq, nk, heads, p, bi.attn, c.attn, g);
  if (memory) {
    *dmemory += dkv;
  } else {
    dh1 += dkv;
  }
  return dx1 + norm_bwd(dh1, p, bi.ln1, c.ln1, g);
}

// ---- full networks ----------------------------------------------------------

template <typename S>
struct TransformerCache {
  Mat<S> patches;
  std::vector<BlockCache<S>> encoder;
  Mat<S> enc_out;
  NormCache<S> enc_norm;
  Mat<S> memory;
  Mat<S> goals;
  std::vector<BlockCache<S>> decoder;
  Mat<S> dec_out;
  NormCache<S> dec_norm;
  Mat<S> z;
};

template <typename S>
Mat<S> transformer_fwd(const ModelConfig& cfg, const Layout& L, const ParamSet<S>& p,
                       const Mat<S>& scans, const Mat<S>& goals, TransformerCache<S>& c) {
  const Eigen::Index batch = scans.rows();
  const Eigen::Index n = cfg.patch_count;
  const Eigen::Index d = cfg.patch_size();
  // Row-major B x H is bit-for-bit a (B*N) x D row-major patch matrix.
  c.patches = Eigen::Map<const Mat<S>>(scans.data(), batch * n, d);
  Mat<S> x = linear_fwd(c.patches, p, L.patch);
  for (Eigen::Index b = 0; b < batch; ++b) x.block(b * n, 0, n, cfg.d_model) += p[L.pos];

  c.encoder.resize(L.encoder.size());
  for (std::size_t i = 0; i < L.encoder.size(); ++i)
    x = block_fwd<S>(x, nullptr, batch, n, n, cfg.heads, p, L.encoder[i], c.encoder[i]);
  c.enc_out = std::move(x);
  c.memory = norm_fwd(c.enc_out, p, L.encoder_norm, c.enc_norm);

  c.goals = goals;
  Mat<S> y = linear_fwd(goals, p, L.goal);
  c.decoder.resize(L.decoder.size());
  for (std::size_t i = 0; i < L.decoder.size(); ++i)
    y = block_fwd<S>(y, &c.memory, batch, 1, n, cfg.heads, p, L.decoder[i], c.decoder[i]);
  c.dec_out = std::move(y);
  c.z = norm_fwd(c.dec_out, p, L.decoder_norm, c.dec_norm);
  return linear_fwd(c.z, p, L.head);
}

template <typename S>
void transformer_bwd(const ModelConfig& cfg, const Layout& L, const ParamSet<S>& p,
                     const TransformerCache<S>& c, const Mat<S>& dout, ParamSet<S>& g) {
  const Eigen::Index batch = dout.rows();
  const Eigen::Index n = cfg.patch_count;
  Mat<S> dz = linear_bwd(c.z, p, L.head, dout, g);
  Mat<S> dy = norm_bwd(dz, p, L.decoder_norm, c.dec_norm, g);
  Mat<S> dmemory = Mat<S>::Zero(c.memory.rows(), c.memory.cols());
  for (std::size_t i = L.decoder.size(); i-- > 0;)
    dy = block_bwd<S>(dy, &c.memory, &dmemory, batch, 1, n, cfg.heads, p, L.decoder[i],
                      c.decoder[i], g);
  linear_bwd(c.goals, p, L.goal, dy, g, false);

  Mat<S> dx = norm_bwd(dmemory, p, L.encoder_norm, c.enc_norm, g);
  for (std::size_t i = L.encoder.size(); i-- > 0;)
    dx = block_bwd<S>(dx, nullptr, nullptr, batch, n, n, cfg.heads, p, L.encoder[i],
                      c.encoder[i], g);
  for (Eigen::Index b = 0; b < batch; ++b) g[L.pos] += dx.block(b * n, 0, n, cfg.d_model);
  linear_bwd(c.patches, p, L.patch, dx, g, false);
}

template <typename S>
struct MlpCache {
  std::vector<Mat<S>> inputs;  // input of each linear layer
};

template <typename S>
Mat<S> mlp_fwd(const Layout& L, const ParamSet<S>& p, const Mat<S>& scans, const Mat<S>& goals,
               MlpCache<S>& c) {
  Mat<S> x(scans.rows(), scans.cols() + 2);
  x << scans, goals;
  c.inputs.clear();
  for (const auto& layer : L.mlp) {
    c.inputs.push_back(x);
    x = linear_fwd(x, p, layer).array().tanh();
  }
  c.inputs.push_back(x);
  return linear_fwd(x, p, L.head);
}

template <typename S>
void mlp_bwd(const Layout& L, const ParamSet<S>& p, const MlpCache<S>& c, const Mat<S>& dout,
             ParamSet<S>& g) {
  Mat<S> dx = linear_bwd(c.inputs.back(), p, L.head, dout, g);
  for (std::size_t i = L.mlp.size(); i-- > 0;) {
    const Mat<S>& out = c.inputs[i + 1];  // tanh output of layer i
    Mat<S> dpre = dx.array() * (S(1) - out.array().square());
    dx = linear_bwd(c.inputs[i], p, L.mlp[i], dpre, g, i > 0);
  }
}

}  // namespace

template <typename Scalar>
Model<Scalar>::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  make_layout(cfg_, params_);
}

template <typename Scalar>
Model<Scalar> Model<Scalar>::initialized(const ModelConfig& cfg, std::uint64_t seed) {
  Model model(cfg);
  std::mt19937_64 rng(seed);
  for (auto& t : model.params_.tensors()) {
    const std::string& name = t.name;
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.value.rows()));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < t.value.size(); ++i)
        t.value.data()[i] = static_cast<Scalar>(u(rng));
    } else if (ends_with(".gamma")) {
      t.value.setOnes();
    } else if (name == "pos_embed") {
      std::normal_distribution<double> nd(0.0, 0.02);
      for (Eigen::Index i = 0; i < t.value.size(); ++i)
        t.value.data()[i] = static_cast<Scalar>(nd(rng));
    } else {
      t.value.setZero();
    }
  }
  return model;
}

template <typename Scalar>
void Model<Scalar>::check_inputs(const Matrix<Scalar>& scans, const Matrix<Scalar>& goals) const {
  if (scans.cols() != cfg_.scan_size)
    throw ShapeMismatch("scan length " + std::to_string(scans.cols()) + " != model H " +
                        std::to_string(cfg_.scan_size));
  if (goals.cols() != 2 || goals.rows() != scans.rows())
    throw ShapeMismatch("goals must be B x 2 matching the scan batch");
  if (!params_.all_finite()) {
    for (const auto& t : params_.tensors())
      if (!t.value.allFinite()) throw NonFiniteParams("non-finite values in " + t.name);
  }
}

template <typename Scalar>
Matrix<Scalar> Model<Scalar>::forward(const Matrix<Scalar>& scans,
                                      const Matrix<Scalar>& goals) const {
  check_inputs(scans, goals);
  const Layout L = layout_of(cfg_);
  if (cfg_.variant == ModelVariant::kTransformer) {
    TransformerCache<Scalar> cache;
    return transformer_fwd(cfg_, L, params_, scans, goals, cache);
  }
  MlpCache<Scalar> cache;
  return mlp_fwd(L, params_, scans, goals, cache);
}

template <typename Scalar>
LossGradient<Scalar> Model<Scalar>::backward(const Batch<Scalar>& batch) const {
  check_inputs(batch.scans, batch.goals);
  if (batch.targets.rows() != batch.scans.rows() || batch.targets.cols() != 2)
    throw ShapeMismatch("targets must be B x 2");
  const Layout L = layout_of(cfg_);
  LossGradient<Scalar> out;
  out.grads = params_.zeros_like();
  const auto scale = Scalar(2) / static_cast<Scalar>(batch.targets.size());
  if (cfg_.variant == ModelVariant::kTransformer) {
    TransformerCache<Scalar> cache;
    out.predictions = transformer_fwd(cfg_, L, params_, batch.scans, batch.goals, cache);
    const Matrix<Scalar> dout = (out.predictions - batch.targets) * scale;
    transformer_bwd(cfg_, L, params_, cache, dout, out.grads);
  } else {
    MlpCache<Scalar> cache;
    out.predictions = mlp_fwd(L, params_, batch.scans, batch.goals, cache);
    const Matrix<Scalar> dout = (out.predictions - batch.targets) * scale;
    mlp_bwd(L, params_, cache, dout, out.grads);
  }
  out.loss = mse_loss(out.predictions, batch.targets);
  for (const auto& t : out.grads.tensors())
    if (!t.value.allFinite()) throw NonFiniteLoss("non-finite gradient in " + t.name);
  return out;
}

GradCheckResult grad_check(const Model<double>& model, const Batch<double>& batch, double step,
                           int samples, std::uint64_t seed,
                           const std::function<void(ParamSet<double>&)>& tamper) {
  LossGradient<double> analytic = model.backward(batch);
  if (tamper) tamper(analytic.grads);

  Model<double> probe = model;
  auto& params = probe.params();
  std::mt19937_64 rng(seed);
  const std::size_t n_tensors = params.size();
  const int total = std::max<int>(samples, static_cast<int>(n_tensors));

  GradCheckResult result;
  for (int s = 0; s < total; ++s) {
    const std::size_t ti = s < static_cast<int>(n_tensors)
                               ? static_cast<std::size_t>(s)
                               : static_cast<std::size_t>(rng() % n_tensors);
    auto& tensor = params.tensors()[ti].value;
    const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(tensor.size()));
    const double saved = tensor.data()[idx];
    auto loss_at = [&](double offset) {
      tensor.data()[idx] = saved + offset;
      return mse_loss(probe.forward(batch.scans, batch.goals), batch.targets);
    };
    // Fourth-order central stencil; truncation error O(step^4).
    const double fd = (8.0 * (loss_at(step) - loss_at(-step)) - (loss_at(2.0 * step) - loss_at(-2.0 * step))) /
                      (12.0 * step);
    tensor.data()[idx] = saved;
    const double ga = analytic.grads.tensors()[ti].value.data()[idx];
    const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-8});
    if (rel > result.max_rel_error || result.worst_tensor.empty()) {
      result.max_rel_error = rel;
      result.worst_tensor = params.tensors()[ti].name;
    }
    ++result.samples;
  }
  return result;
}

template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = "lics-checkpoint";
  header["schema_version"] = 1;
  header["config"] = model.config().to_json();
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : model.params().tensors()) {
    dir.push_back({{"name", t.name},
                   {"shape", {t.value.rows(), t.value.cols()}},
                   {"offset", offset}});
    offset += static_cast<std::size_t>(t.value.size()) * sizeof(float);
  }
  header["tensors"] = dir;
  header["data_bytes"] = offset;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  std::vector<char> bytes;
  bytes.reserve(offset);
  for (const auto& t : model.params().tensors()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t.value.data()[i]));
      for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
    }
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "lics-checkpoint")
    throw ParseError(path.string() + ": not a checkpoint file");
  Model<Scalar> model(ModelConfig::from_json(header.at("config")));
  const std::size_t data_bytes = header.at("data_bytes").get<std::size_t>();
  std::vector<unsigned char> data(data_bytes);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data_bytes));
  if (static_cast<std::size_t>(in.gcount()) != data_bytes)
    throw ParseError(path.string() + ": truncated tensor data");

  auto& tensors = model.params().tensors();
  const auto& dir = header.at("tensors");
  if (dir.size() != tensors.size()) throw ParseError(path.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    const auto& e = dir[i];
    if (e.at("name").get<std::string>() != t.name ||
        e.at("shape")[0].get<Eigen::Index>() != t.value.rows() ||
        e.at("shape")[1].get<Eigen::Index>() != t.value.cols())
      throw ParseError(path.string() + ": tensor directory mismatch at " + t.name);
    std::size_t off = e.at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(t.value.size()) * 4 > data_bytes)
      throw ParseError(path.string() + ": tensor " + t.name + " exceeds data block");
    for (Eigen::Index k = 0; k < t.value.size(); ++k, off += 4) {
      const std::uint32_t bits = static_cast<std::uint32_t>(data[off]) |
                                 (static_cast<std::uint32_t>(data[off + 1]) << 8) |
                                 (static_cast<std::uint32_t>(data[off + 2]) << 16) |
                                 (static_cast<std::uint32_t>(data[off + 3]) << 24);
      t.value.data()[k] = static_cast<Scalar>(std::bit_cast<float>(bits));
    }
  }
  return model;
}

template class Model<float>;
template class Model<double>;
template Matrix<float> patchify<float>(const Eigen::Ref<const Eigen::Matrix<float, 1, Eigen::Dynamic>>&, int);
template Matrix<double> patchify<double>(const Eigen::Ref<const Eigen::Matrix<double, 1, Eigen::Dynamic>>&, int);
template float mse_loss<float>(const Matrix<float>&, const Matrix<float>&);
template double mse_loss<double>(const Matrix<double>&, const Matrix<double>&);
template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace lics
