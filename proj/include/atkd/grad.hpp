// SPDX-License-Identifier: Apache-2.0
#pragma once

// Analytical gradients of every objective with respect to the student logits,
// and a central-difference checker for them.
//
// Per-token derivatives (q = student softmax, p = teacher softmax, g = target,
// hats = renormalized over non-target classes):
//
//   d KL(p||q) / dz_i      = q_i - p_i
//   d TKD / dz_g           = q_g - p_g
//   d TKD / dz_i, i != g   = q_hat_i * (q_ng - p_ng)
//   d DKD / dz_i, i != g   = q_hat_i - p_hat_i            (zero at g)
//
// Reverse direction, with D = log(q_g/p_g) - log(q_ng/p_ng):
//
//   d KL(q||p) / dz_i      = q_i * (log q_i - log p_i - KL(q||p))
//   d TKD_rev / dz_g       = q_g q_ng D,  i != g: -q_g q_ng D q_hat_i
//   d DKD_rev / dz_i       = q_hat_i * (log q_hat_i - log p_hat_i - DKD_rev)
//
// The easy/hard split depends only on teacher logits and is held constant.

#include <vector>

#include "atkd/decomposition.hpp"
#include "atkd/objective.hpp"

namespace atkd {

struct LossGrad {
  double loss = 0.0;
  /// d loss / d student logit, row-major [T][C]; mask-false rows are zero.
  std::vector<double> grad;
};

LossGrad loss_grad(const LogitBatch& batch, const ObjectiveConfig& cfg);
LossGrad loss_grad(const LogitBatch& batch, const ObjectiveConfig& cfg, const TokenSplit& split);

/// Split used by the adaptive modes (empty for the others).
TokenSplit split_for(const LogitBatch& batch, const ObjectiveConfig& cfg);

/// Largest relative error between the analytical gradient and central
/// differences over every mask-true student logit. The relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator. epsilon in [1e-8, 1e-3].
double fd_check(const LogitBatch& batch, const ObjectiveConfig& cfg, double epsilon);

}  // namespace atkd
