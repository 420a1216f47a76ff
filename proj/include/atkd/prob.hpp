// SPDX-License-Identifier: Apache-2.0
#pragma once

// Probability primitives over a single vocabulary row. Everything here is a
// pure function in double precision; logits are validated on entry.

#include <cstddef>
#include <span>
#include <vector>

namespace atkd {

/// Two-way split of a distribution into the target class and everything else.
struct BinaryProb {
  double p_target = 0.0;
  double p_nontarget = 0.0;
};

/// Distribution renormalized over the non-target classes. Stored full-length
/// with the target slot held at exactly zero so indices line up with logits.
struct NonTargetProb {
  std::vector<double> values;
  std::size_t target_index = 0;
};

/// Throws InvalidInput naming the first non-finite index, or if size < 2.
void validate_logits(std::span<const double> logits);

/// log Σ exp(x_j) with max subtraction. Skips index `skip` when it is < size.
double log_sum_exp(std::span<const double> x, std::size_t skip = static_cast<std::size_t>(-1));

std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

BinaryProb binary_split(std::span<const double> probs, std::size_t target_index);

NonTargetProb nontarget_renorm(std::span<const double> logits, std::size_t target_index);

/// Σ p_j (log p_j - log q_j), with 0·log(0/q) taken as 0.
/// Throws DimensionError on size mismatch and InfiniteDivergence when some
/// p_j > 0 meets q_j = 0.
double kl_div(std::span<const double> p, std::span<const double> q);
double kl_div(const BinaryProb& p, const BinaryProb& q);
double kl_div(const NonTargetProb& p, const NonTargetProb& q);

/// KL between two distributions given as log-probabilities. Both rows must
/// come from finite logits, so no zero-mass guard is needed.
double kl_from_log(std::span<const double> log_p, std::span<const double> log_q);

}  // namespace atkd
