// SPDX-License-Identifier: Apache-2.0
#include "atkd/tiny_lm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

#include "atkd/error.hpp"
#include "atkd/prob.hpp"

namespace atkd {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
};

struct Layout {
  std::size_t wte = 0, wpe = 0;
  std::vector<LayerOffsets> layers;
  std::size_t lnf_g = 0, lnf_b = 0, w_head = 0, b_head = 0;
  std::size_t total = 0;
};

Layout make_layout(const ModelConfig& c) {
  const std::size_t d = c.d_model, v = c.vocab_size;
  Layout l;
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    const std::size_t off = at;
    at += n;
    return off;
  };
  l.wte = take(v * d);
  l.wpe = take(std::size_t{c.context_len} * d);
  for (std::uint32_t i = 0; i < c.n_layers; ++i) {
    LayerOffsets o{};
    o.ln1_g = take(d);
    o.ln1_b = take(d);
    o.w_qkv = take(d * 3 * d);
    o.b_qkv = take(3 * d);
    o.w_o = take(d * d);
    o.b_o = take(d);
    o.ln2_g = take(d);
    o.ln2_b = take(d);
    o.w_fc = take(d * 4 * d);
    o.b_fc = take(4 * d);
    o.w_proj = take(4 * d * d);
    o.b_proj = take(d);
    l.layers.push_back(o);
  }
  l.lnf_g = take(d);
  l.lnf_b = take(d);
  l.w_head = take(d * v);
  l.b_head = take(v);
  l.total = at;
  return l;
}

template <class R>
using Mat = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class R>
using Col = Eigen::Matrix<R, Eigen::Dynamic, 1>;
template <class R>
using Row = Eigen::Matrix<R, 1, Eigen::Dynamic>;
template <class R>
using MatMap = Eigen::Map<Mat<R>>;
template <class R>
using CMatMap = Eigen::Map<const Mat<R>>;
template <class R>
using RowMap = Eigen::Map<Row<R>>;
template <class R>
using CRowMap = Eigen::Map<const Row<R>>;

// Parameter and gradient buffers start on Eigen's packet alignment so that
// vectorized kernels peel the same way on every run, keeping results bitwise
// reproducible regardless of where the allocator puts them.
template <class R>
using AlignedVec = std::vector<R, Eigen::aligned_allocator<R>>;

template <class R>
struct LayerActs {
  Mat<R> x_in, ln1, qkv, attn, x_mid, ln2, fc_pre, fc_tanh, fc_act, x_out;
  Col<R> ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
  std::vector<Mat<R>> probs;  // [batch * heads] causal attention weights, T x T
};

template <class R>
struct Acts {
  std::size_t batch = 0, seq = 0;
  std::vector<std::uint32_t> tokens;
  AlignedVec<R> params;
  std::vector<LayerActs<R>> layers;
  Mat<R> lnf;
  Col<R> lnf_mean, lnf_rstd;
};

template <class R>
void layer_norm(const Mat<R>& x, const R* gain, const R* bias, Mat<R>& y, Col<R>& mean,
                Col<R>& rstd) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  mean.resize(n);
  rstd.resize(n);
  CRowMap<R> g(gain, d), b(bias, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const R mu = x.row(i).mean();
    const R var = (x.row(i).array() - mu).square().mean();
    const R rs = R(1) / std::sqrt(var + R(kLayerNormEps));
    mean(i) = mu;
    rstd(i) = rs;
    y.row(i) = ((x.row(i).array() - mu) * rs * g.array() + b.array()).matrix();
  }
}

// Accumulates into dx, dgain and dbias.
template <class R>
void layer_norm_backward(const Mat<R>& dy, const Mat<R>& x, const Col<R>& mean,
                         const Col<R>& rstd, const R* gain, R* dgain, R* dbias, Mat<R>& dx) {
  const Eigen::Index n = x.rows(), d = x.cols();
  CRowMap<R> g(gain, d);
  RowMap<R> dg(dgain, d), db(dbias, d);
  Row<R> xhat(d), dxhat(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    xhat = ((x.row(i).array() - mean(i)) * rstd(i)).matrix();
    dxhat = (dy.row(i).array() * g.array()).matrix();
    dg.array() += dy.row(i).array() * xhat.array();
    db += dy.row(i);
    const R m1 = dxhat.mean();
    const R m2 = (dxhat.array() * xhat.array()).mean();
    dx.row(i).array() += rstd(i) * (dxhat.array() - m1 - xhat.array() * m2);
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

// y = 0.5 x (1 + tanh(c (x + a x^3))); keeps the tanh for the backward pass.
template <class R>
void gelu(const Mat<R>& x, Mat<R>& th, Mat<R>& y) {
  const R c = R(kGeluC), a = R(kGeluA);
  th = (c * (x.array() + a * x.array().cube())).tanh().matrix();
  y = (R(0.5) * x.array() * (R(1) + th.array())).matrix();
}

template <class R>
void gelu_backward(const Mat<R>& dy, const Mat<R>& x, const Mat<R>& th, Mat<R>& dx) {
  const R c = R(kGeluC), a = R(kGeluA);
  dx = (dy.array() * (R(0.5) * (R(1) + th.array()) +
                      R(0.5) * x.array() * (R(1) - th.array().square()) * c *
                          (R(1) + R(3) * a * x.array().square())))
           .matrix();
}

template <class R>
std::vector<double> forward_impl(const TinyLM& model, std::span<const std::uint32_t> tokens,
                                 std::size_t batch, std::size_t seq, Acts<R>& a) {
  const ModelConfig& c = model.config();
  const Layout lay = make_layout(c);
  const Eigen::Index d = c.d_model, v = c.vocab_size, heads = c.n_heads;
  const Eigen::Index hd = d / heads;
  const Eigen::Index n = static_cast<Eigen::Index>(batch * seq);
  const Eigen::Index T = static_cast<Eigen::Index>(seq);

  a.batch = batch;
  a.seq = seq;
  a.tokens.assign(tokens.begin(), tokens.end());
  a.params.assign(model.params().begin(), model.params().end());
  const R* p = a.params.data();

  Mat<R> x(n, d);
  {
    CMatMap<R> wte(p + lay.wte, v, d), wpe(p + lay.wpe, c.context_len, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) = wte.row(tokens[static_cast<std::size_t>(i)]) + wpe.row(i % T);
    }
  }

  const R scale = R(1) / std::sqrt(R(hd));
  a.layers.resize(c.n_layers);
  for (std::uint32_t li = 0; li < c.n_layers; ++li) {
    const LayerOffsets& o = lay.layers[li];
    LayerActs<R>& la = a.layers[li];
    la.x_in = x;
    layer_norm<R>(x, p + o.ln1_g, p + o.ln1_b, la.ln1, la.ln1_mean, la.ln1_rstd);
    la.qkv.noalias() = la.ln1 * CMatMap<R>(p + o.w_qkv, d, 3 * d);
    la.qkv.rowwise() += CRowMap<R>(p + o.b_qkv, 3 * d);

    la.attn.setZero(n, d);
    la.probs.resize(batch * heads);
    Mat<R> scores(T, T);
    for (std::size_t b = 0; b < batch; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * T;
      for (Eigen::Index h = 0; h < heads; ++h) {
        auto q = la.qkv.block(r0, h * hd, T, hd);
        auto k = la.qkv.block(r0, d + h * hd, T, hd);
        auto val = la.qkv.block(r0, 2 * d + h * hd, T, hd);
        scores.noalias() = q * k.transpose();
        Mat<R>& pr = la.probs[b * heads + h];
        pr.setZero(T, T);
        for (Eigen::Index i = 0; i < T; ++i) {
          auto s = scores.row(i).head(i + 1);
          auto e = pr.row(i).head(i + 1);
          e = ((s.array() - s.maxCoeff()) * scale).exp().matrix();
          e /= e.sum();
        }
        la.attn.block(r0, h * hd, T, hd).noalias() = pr * val;
      }
    }
    la.x_mid = x;
    la.x_mid.noalias() += la.attn * CMatMap<R>(p + o.w_o, d, d);
    la.x_mid.rowwise() += CRowMap<R>(p + o.b_o, d);

    layer_norm<R>(la.x_mid, p + o.ln2_g, p + o.ln2_b, la.ln2, la.ln2_mean, la.ln2_rstd);
    la.fc_pre.noalias() = la.ln2 * CMatMap<R>(p + o.w_fc, d, 4 * d);
    la.fc_pre.rowwise() += CRowMap<R>(p + o.b_fc, 4 * d);
    gelu<R>(la.fc_pre, la.fc_tanh, la.fc_act);
    x = la.x_mid;
    x.noalias() += la.fc_act * CMatMap<R>(p + o.w_proj, 4 * d, d);
    x.rowwise() += CRowMap<R>(p + o.b_proj, d);
    la.x_out = x;
  }

  layer_norm<R>(x, p + lay.lnf_g, p + lay.lnf_b, a.lnf, a.lnf_mean, a.lnf_rstd);
  Mat<R> logits(n, v);
  logits.noalias() = a.lnf * CMatMap<R>(p + lay.w_head, d, v);
  logits.rowwise() += CRowMap<R>(p + lay.b_head, v);

  std::vector<double> out(static_cast<std::size_t>(n * v));
  for (Eigen::Index i = 0; i < n * v; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(logits.data()[i]);
  return out;
}

template <class R>
std::vector<double> backward_impl(const TinyLM& model, const Acts<R>& a,
                                  std::span<const double> grad_logits) {
  const ModelConfig& c = model.config();
  const Layout lay = make_layout(c);
  const Eigen::Index d = c.d_model, v = c.vocab_size, heads = c.n_heads;
  const Eigen::Index hd = d / heads;
  const Eigen::Index T = static_cast<Eigen::Index>(a.seq);
  const Eigen::Index n = static_cast<Eigen::Index>(a.batch) * T;
  if (grad_logits.size() != static_cast<std::size_t>(n * v)) {
    throw DimensionError("grad_logits has " + std::to_string(grad_logits.size()) +
                         " entries, expected " + std::to_string(n * v));
  }
  const R* p = a.params.data();
  AlignedVec<R> grad(lay.total, R(0));
  R* gp = grad.data();

  Mat<R> dlogits(n, v);
  for (Eigen::Index i = 0; i < n * v; ++i) dlogits.data()[i] = static_cast<R>(grad_logits[static_cast<std::size_t>(i)]);

  MatMap<R>(gp + lay.w_head, d, v).noalias() += a.lnf.transpose() * dlogits;
  RowMap<R>(gp + lay.b_head, v) += dlogits.colwise().sum();
  Mat<R> dlnf(n, d);
  dlnf.noalias() = dlogits * CMatMap<R>(p + lay.w_head, d, v).transpose();

  Mat<R> dx = Mat<R>::Zero(n, d);
  layer_norm_backward<R>(dlnf, a.layers.back().x_out, a.lnf_mean, a.lnf_rstd, p + lay.lnf_g, gp + lay.lnf_g,
                         gp + lay.lnf_b, dx);

  const R scale = R(1) / std::sqrt(R(hd));
  Mat<R> da, dfc, dln, dattn, dqkv, dp, ds;
  for (std::uint32_t li = c.n_layers; li-- > 0;) {
    const LayerOffsets& o = lay.layers[li];
    const LayerActs<R>& la = a.layers[li];

    // MLP: x_out = x_mid + gelu(ln2 W_fc + b_fc) W_proj + b_proj
    MatMap<R>(gp + o.w_proj, 4 * d, d).noalias() += la.fc_act.transpose() * dx;
    RowMap<R>(gp + o.b_proj, d) += dx.colwise().sum();
    da.noalias() = dx * CMatMap<R>(p + o.w_proj, 4 * d, d).transpose();
    gelu_backward<R>(da, la.fc_pre, la.fc_tanh, dfc);
    MatMap<R>(gp + o.w_fc, d, 4 * d).noalias() += la.ln2.transpose() * dfc;
    RowMap<R>(gp + o.b_fc, 4 * d) += dfc.colwise().sum();
    dln.noalias() = dfc * CMatMap<R>(p + o.w_fc, d, 4 * d).transpose();
    layer_norm_backward<R>(dln, la.x_mid, la.ln2_mean, la.ln2_rstd, p + o.ln2_g, gp + o.ln2_g,
                           gp + o.ln2_b, dx);

    // Attention: x_mid = x_in + attn W_o + b_o
    MatMap<R>(gp + o.w_o, d, d).noalias() += la.attn.transpose() * dx;
    RowMap<R>(gp + o.b_o, d) += dx.colwise().sum();
    dattn.noalias() = dx * CMatMap<R>(p + o.w_o, d, d).transpose();

    dqkv.setZero(n, 3 * d);
    for (std::size_t b = 0; b < a.batch; ++b) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(b) * T;
      for (Eigen::Index h = 0; h < heads; ++h) {
        const Mat<R>& pr = la.probs[b * heads + h];
        auto q = la.qkv.block(r0, h * hd, T, hd);
        auto k = la.qkv.block(r0, d + h * hd, T, hd);
        auto val = la.qkv.block(r0, 2 * d + h * hd, T, hd);
        auto dout = dattn.block(r0, h * hd, T, hd);
        dp.noalias() = dout * val.transpose();
        dqkv.block(r0, 2 * d + h * hd, T, hd).noalias() += pr.transpose() * dout;
        ds.resize(T, T);
        for (Eigen::Index i = 0; i < T; ++i) {
          const R dot = pr.row(i).dot(dp.row(i));
          ds.row(i) = (pr.row(i).array() * (dp.row(i).array() - dot) * scale).matrix();
        }
        dqkv.block(r0, h * hd, T, hd).noalias() += ds * k;
        dqkv.block(r0, d + h * hd, T, hd).noalias() += ds.transpose() * q;
      }
    }
    MatMap<R>(gp + o.w_qkv, d, 3 * d).noalias() += la.ln1.transpose() * dqkv;
    RowMap<R>(gp + o.b_qkv, 3 * d) += dqkv.colwise().sum();
    dln.noalias() = dqkv * CMatMap<R>(p + o.w_qkv, d, 3 * d).transpose();
    layer_norm_backward<R>(dln, la.x_in, la.ln1_mean, la.ln1_rstd, p + o.ln1_g, gp + o.ln1_g,
                           gp + o.ln1_b, dx);
  }

  MatMap<R> dwte(gp + lay.wte, v, d), dwpe(gp + lay.wpe, c.context_len, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dwte.row(a.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
    dwpe.row(i % T) += dx.row(i);
  }
  return std::vector<double>(grad.begin(), grad.end());
}

void check_tokens(const ModelConfig& c, std::span<const std::uint32_t> tokens, std::size_t batch,
                  std::size_t seq) {
  if (seq == 0 || batch == 0) throw InvalidInput("forward needs at least one token");
  if (seq > c.context_len) {
    throw InvalidInput("sequence length " + std::to_string(seq) + " exceeds context length " +
                       std::to_string(c.context_len));
  }
  if (tokens.size() != batch * seq) {
    throw DimensionError("expected " + std::to_string(batch * seq) + " tokens, got " +
                         std::to_string(tokens.size()));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= c.vocab_size) {
      throw InvalidInput("token " + std::to_string(tokens[i]) + " at position " +
                         std::to_string(i) + " outside vocabulary of " +
                         std::to_string(c.vocab_size));
    }
  }
}

}  // namespace

struct ForwardState::Impl {
  std::variant<std::monostate, Acts<float>, Acts<double>> acts;
};

ForwardState::ForwardState() : impl_(std::make_unique<Impl>()) {}
ForwardState::~ForwardState() = default;
ForwardState::ForwardState(ForwardState&&) noexcept = default;
ForwardState& ForwardState::operator=(ForwardState&&) noexcept = default;

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (d_model == 0 || n_layers == 0 || n_heads == 0) {
    throw ConfigError("d_model, n_layers and n_heads must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (context_len < 2) throw ConfigError("context_len must be at least 2");
}

std::size_t parameter_count(const ModelConfig& cfg) { return make_layout(cfg).total; }

TinyLM::TinyLM(const ModelConfig& cfg) : config_(cfg) {
  config_.validate();
  const Layout lay = make_layout(config_);
  params_.assign(lay.total, 0.0f);
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  auto fill_normal = [&](std::size_t off, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) params_[off + i] = static_cast<float>(normal(rng));
  };
  auto fill_ones = [&](std::size_t off, std::size_t count) {
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(off), count, 1.0f);
  };
  const std::size_t d = config_.d_model, v = config_.vocab_size;
  fill_normal(lay.wte, v * d);
  fill_normal(lay.wpe, std::size_t{config_.context_len} * d);
  for (const LayerOffsets& o : lay.layers) {
    fill_ones(o.ln1_g, d);
    fill_normal(o.w_qkv, 3 * d * d);
    fill_normal(o.w_o, d * d);
    fill_ones(o.ln2_g, d);
    fill_normal(o.w_fc, 4 * d * d);
    fill_normal(o.w_proj, 4 * d * d);
  }
  fill_ones(lay.lnf_g, d);
  fill_normal(lay.w_head, d * v);
}

TinyLM::TinyLM(const ModelConfig& cfg, std::vector<float> params)
    : config_(cfg), params_(std::move(params)) {
  config_.validate();
  if (params_.size() != parameter_count(config_)) {
    throw DimensionError("parameter vector has " + std::to_string(params_.size()) +
                         " entries, config expects " + std::to_string(parameter_count(config_)));
  }
}

void TinyLM::zero_head() {
  const Layout lay = make_layout(config_);
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(lay.w_head), params_.end(), 0.0f);
}

std::vector<double> forward(const TinyLM& model, std::span<const std::uint32_t> tokens,
                            std::size_t batch, std::size_t seq_len, Precision precision,
                            ForwardState* state) {
  check_tokens(model.config(), tokens, batch, seq_len);
  if (precision == Precision::Float32) {
    Acts<float> a;
    auto out = forward_impl<float>(model, tokens, batch, seq_len, a);
    if (state) state->impl().acts = std::move(a);
    return out;
  }
  Acts<double> a;
  auto out = forward_impl<double>(model, tokens, batch, seq_len, a);
  if (state) state->impl().acts = std::move(a);
  return out;
}

std::vector<double> forward(const TinyLM& model, std::span<const std::uint32_t> tokens) {
  return forward(model, tokens, 1, tokens.size());
}

std::vector<std::vector<double>> block_outputs(const ForwardState& state) {
  std::vector<std::vector<double>> out;
  std::visit(
      [&](const auto& a) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(a)>, std::monostate>) {
          for (const auto& la : a.layers) {
            out.emplace_back(la.x_out.data(), la.x_out.data() + la.x_out.size());
          }
        }
      },
      state.impl().acts);
  return out;
}

std::vector<double> backward(const TinyLM& model, const ForwardState& state,
                             std::span<const double> grad_logits) {
  return std::visit(
      [&](const auto& a) -> std::vector<double> {
        if constexpr (std::is_same_v<std::decay_t<decltype(a)>, std::monostate>) {
          throw InvalidInput("backward called without a recorded forward pass");
        } else {
          if (a.params.size() != model.size()) {
            throw DimensionError("forward state was recorded for a different model");
          }
          return backward_impl(model, a, grad_logits);
        }
      },
      state.impl().acts);
}

std::vector<double> backward(const TinyLM& model, std::span<const std::uint32_t> tokens,
                             std::span<const double> grad_logits) {
  ForwardState state;
  forward(model, tokens, 1, tokens.size(), Precision::Float64, &state);
  return backward(model, state, grad_logits);
}

void adam_step(std::span<float> params, AdamState& state, std::span<const double> grads,
               double lr, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("gradient has " + std::to_string(grads.size()) + " entries, model has " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingDivergence("non-finite gradient at parameter " + std::to_string(i),
                               state.step + 1);
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] = static_cast<float>(static_cast<double>(params[i]) -
                                   lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

void adam_step(TinyLM& model, AdamState& state, std::span<const double> grads, double lr,
               const AdamConfig& cfg) {
  adam_step(model.mutable_params(), state, grads, lr, cfg);
}

double mean_cross_entropy(const TinyLM& model, std::span<const std::uint32_t> tokens,
                          Precision precision) {
  if (tokens.size() < 2) throw InvalidInput("perplexity needs at least 2 evaluation tokens");
  const std::size_t ctx = model.config().context_len;
  const std::size_t v = model.config().vocab_size;
  constexpr std::size_t kWindowsPerPass = 16;

  double total = 0.0;
  std::size_t count = 0;
  auto score = [&](std::span<const std::uint32_t> chunk, std::size_t windows, std::size_t len) {
    const auto logits = forward(model, chunk, windows, len, precision);
    for (std::size_t w = 0; w < windows; ++w) {
      for (std::size_t i = 0; i + 1 < len; ++i) {
        const std::size_t row = w * len + i;
        const std::span<const double> z(logits.data() + row * v, v);
        total -= z[chunk[row + 1]] - log_sum_exp(z);
        ++count;
      }
    }
  };

  const std::size_t full = tokens.size() / ctx;
  for (std::size_t w = 0; w < full; w += kWindowsPerPass) {
    const std::size_t nw = std::min(kWindowsPerPass, full - w);
    score(tokens.subspan(w * ctx, nw * ctx), nw, ctx);
  }
  const std::size_t tail = tokens.size() - full * ctx;
  if (tail >= 2) score(tokens.subspan(full * ctx), 1, tail);
  return total / static_cast<double>(count);
}

double perplexity(const TinyLM& model, std::span<const std::uint32_t> tokens,
                  Precision precision) {
  return std::exp(mean_cross_entropy(model, tokens, precision));
}

std::vector<float> interpolate(std::span<const float> theta0, std::span<const float> theta1,
                               double beta) {
  if (theta0.size() != theta1.size()) {
    throw DimensionError("interpolation endpoints differ in length: " +
                         std::to_string(theta0.size()) + " vs " + std::to_string(theta1.size()));
  }
  std::vector<float> out(theta1.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = theta0[i], b = theta1[i];
    out[i] = static_cast<float>(b + beta * (b - a));
  }
  return out;
}

std::vector<double> interpolate(std::span<const double> theta0, std::span<const double> theta1,
                                double beta) {
  if (theta0.size() != theta1.size()) {
    throw DimensionError("interpolation endpoints differ in length: " +
                         std::to_string(theta0.size()) + " vs " + std::to_string(theta1.size()));
  }
  std::vector<double> out(theta1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta1[i] + beta * (theta1[i] - theta0[i]);
  return out;
}

std::vector<std::uint32_t> sample(const TinyLM& model, std::vector<std::uint32_t> prompt,
                                  std::size_t count, std::mt19937_64& rng) {
  if (prompt.empty()) throw InvalidInput("sampling needs a non-empty prompt");
  const std::size_t ctx = model.config().context_len;
  const std::size_t v = model.config().vocab_size;
  for (std::size_t step = 0; step < count; ++step) {
    const std::size_t len = std::min(ctx, prompt.size());
    const std::span<const std::uint32_t> window(prompt.data() + prompt.size() - len, len);
    const auto logits = forward(model, window);
    const auto probs = softmax(std::span<const double>(logits.data() + (len - 1) * v, v));
    std::discrete_distribution<std::uint32_t> pick(probs.begin(), probs.end());
    prompt.push_back(pick(rng));
  }
  return prompt;
}

}  // namespace atkd
