// SPDX-License-Identifier: Apache-2.0
#pragma once

// A small pre-norm causal transformer over byte tokens with a hand-written
// backward pass. Parameters live in one flat float vector; the math runs in
// either float or double and gradients are always handed back as double.
//
// Parameter layout, in order (d = d_model, V = vocab_size, L = n_layers):
//   wte [V x d], wpe [context_len x d]
//   per layer: ln1 gain/bias [d], w_qkv [d x 3d], b_qkv [3d], w_o [d x d], b_o [d],
//              ln2 gain/bias [d], w_fc [d x 4d], b_fc [4d], w_proj [4d x d], b_proj [d]
//   lnf gain/bias [d], w_head [d x V], b_head [V]
//
//   P = V d + context_len d + L (12 d^2 + 13 d) + 2 d + d V + V

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace atkd {

struct ModelConfig {
  std::uint32_t vocab_size = 0;
  std::uint32_t d_model = 32;
  std::uint32_t n_layers = 2;
  std::uint32_t n_heads = 2;
  std::uint32_t context_len = 128;
  std::uint64_t seed = 0;

  /// ConfigError on zero sizes, d_model % n_heads != 0 or context_len < 2.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

std::size_t parameter_count(const ModelConfig& cfg);

enum class Precision { Float32, Float64 };

class TinyLM {
 public:
  /// Weights ~ N(0, 0.02), biases 0, layer-norm gains 1, drawn from cfg.seed.
  explicit TinyLM(const ModelConfig& cfg);
  /// Adopts an existing parameter vector (length must equal parameter_count).
  TinyLM(const ModelConfig& cfg, std::vector<float> params);

  const ModelConfig& config() const noexcept { return config_; }
  std::span<const float> params() const noexcept { return params_; }
  std::span<float> mutable_params() noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }

  /// Zeroes the output projection so every position predicts uniformly.
  void zero_head();

 private:
  ModelConfig config_;
  std::vector<float> params_;
};

/// Activations kept by forward() for a subsequent backward().
class ForwardState {
 public:
  ForwardState();
  ~ForwardState();
  ForwardState(ForwardState&&) noexcept;
  ForwardState& operator=(ForwardState&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Logits [batch * seq_len][vocab] for `batch` sequences of `seq_len` tokens
/// laid out back to back. Position t of a sequence only sees tokens 0..t.
/// Pass `state` to keep activations for backward().
std::vector<double> forward(const TinyLM& model, std::span<const std::uint32_t> tokens,
                            std::size_t batch, std::size_t seq_len,
                            Precision precision = Precision::Float64, ForwardState* state = nullptr);

/// Single-sequence convenience overload.
std::vector<double> forward(const TinyLM& model, std::span<const std::uint32_t> tokens);

/// Residual-stream output of every block for one forward pass, [layer][N * d].
std::vector<std::vector<double>> block_outputs(const ForwardState& state);

/// d loss / d params given d loss / d logits, using the activations of the
/// forward pass that produced those logits.
std::vector<double> backward(const TinyLM& model, const ForwardState& state,
                             std::span<const double> grad_logits);

/// Recomputes the forward pass (double precision) and back-propagates.
std::vector<double> backward(const TinyLM& model, std::span<const std::uint32_t> tokens,
                             std::span<const double> grad_logits);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update on the model's float parameters.
/// TrainingDivergence if any gradient entry is non-finite; the model is left
/// untouched in that case.
void adam_step(TinyLM& model, AdamState& state, std::span<const double> grads, double lr,
               const AdamConfig& cfg = {});

/// Same update on a bare parameter vector.
void adam_step(std::span<float> params, AdamState& state, std::span<const double> grads,
               double lr, const AdamConfig& cfg = {});

/// Mean next-token cross-entropy (nats) over non-overlapping windows of
/// context_len tokens; the first position of each window is not scored.
double mean_cross_entropy(const TinyLM& model, std::span<const std::uint32_t> tokens,
                          Precision precision = Precision::Float64);

/// exp(mean_cross_entropy). InvalidInput if fewer than 2 tokens.
double perplexity(const TinyLM& model, std::span<const std::uint32_t> tokens,
                  Precision precision = Precision::Float64);

/// theta1 + beta * (theta1 - theta0), elementwise.
std::vector<float> interpolate(std::span<const float> theta0, std::span<const float> theta1,
                               double beta);
std::vector<double> interpolate(std::span<const double> theta0, std::span<const double> theta1,
                                double beta);

/// Draws `count` tokens autoregressively from the model's distribution.
std::vector<std::uint32_t> sample(const TinyLM& model, std::vector<std::uint32_t> prompt,
                                  std::size_t count, std::mt19937_64& rng);

}  // namespace atkd
