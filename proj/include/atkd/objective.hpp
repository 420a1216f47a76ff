// SPDX-License-Identifier: Apache-2.0
#pragma once

// Distillation objectives built on the per-token decomposition, including
// the adaptive (easy/hard split) objective.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atkd/decomposition.hpp"

namespace atkd {

enum class Mode {
  ForwardKL,
  ReverseKL,
  TkdOnly,
  DkdOnly,
  TkdPlusDkd,
  AlphaTkdDkd,
  ATKD,
  // Adaptive split with reverse-direction terms; ranking still uses teacher UnC.
  ReverseATKD,
};

/// The seven modes of the objective ablations, in a fixed order.
inline constexpr Mode kCoreModes[] = {Mode::ForwardKL,  Mode::ReverseKL,   Mode::TkdOnly,
                                      Mode::DkdOnly,    Mode::TkdPlusDkd,  Mode::AlphaTkdDkd,
                                      Mode::ATKD};

std::string_view to_string(Mode mode) noexcept;
/// Accepts the snake_case names produced by to_string. ConfigError otherwise.
Mode parse_mode(std::string_view name);

struct ObjectiveConfig {
  Mode mode = Mode::ForwardKL;
  double k_ratio = 0.5;  // fraction of active tokens treated as hard
  double lambda = 0.2;   // weight of the easy-token term
  double alpha = 1.0;    // TKD scale for AlphaTkdDkd

  /// ConfigError if any hyperparameter is out of range.
  void validate() const;
};

/// Hard tokens are the top round(k * n) active tokens by UnC (descending,
/// ties broken by ascending index). Both lists are in ascending index order.
struct TokenSplit {
  std::vector<std::size_t> hard;
  std::vector<std::size_t> easy;
};

std::size_t hard_count(double k_ratio, std::size_t active);

TokenSplit rank_and_split(std::span<const double> unc, std::span<const std::uint8_t> mask,
                          double k_ratio);

/// Mask with ones exactly at the given indices.
std::vector<std::uint8_t> indices_to_mask(std::span<const std::size_t> indices, std::size_t tokens);

/// Coefficients of one token's loss contribution:
///   binary * TKD + nontarget * DKD + full * KL
/// where the terms are forward or reverse direction depending on the mode.
struct TokenWeights {
  double binary = 0.0;
  double nontarget = 0.0;
  double full = 0.0;
};

bool is_reverse(Mode mode) noexcept;

/// Per-token weights for a batch. `split` is only consulted for the
/// adaptive modes. Mask-false tokens get all-zero weights.
std::vector<TokenWeights> objective_weights(const ObjectiveConfig& cfg,
                                            std::span<const std::uint8_t> mask,
                                            const TokenSplit& split);

/// Reverse-direction counterparts of the per-token terms: KL(q_b||p_b),
/// KL(q_hat||p_hat) and KL(q||p).
struct ReverseTerms {
  double tkd = 0.0;
  double dkd = 0.0;
  double kl_total = 0.0;
};

ReverseTerms reverse_token_terms(std::span<const double> teacher_logits,
                                 std::span<const double> student_logits, std::size_t target_index);

/// Loss value for any mode. EmptyBatch when no token is active.
double objective_eval(const LogitBatch& batch, const ObjectiveConfig& cfg);

/// Same, with the easy/hard split supplied by the caller.
double objective_eval(const LogitBatch& batch, const ObjectiveConfig& cfg, const TokenSplit& split);

/// lambda * mean_easy(dkd) + (1 - lambda) * mean_hard(tkd + dkd). An empty
/// set contributes 0 and lambda is not renormalized.
double atkd_loss(const LogitBatch& batch, const ObjectiveConfig& cfg);

/// atkd_loss with reverse-direction terms, ranked by teacher UnC.
double atkd_on_reverse(const LogitBatch& batch, const ObjectiveConfig& cfg);

}  // namespace atkd
