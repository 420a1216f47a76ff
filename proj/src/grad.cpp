// SPDX-License-Identifier: Apache-2.0
#include "atkd/grad.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "atkd/error.hpp"
#include "atkd/prob.hpp"

namespace atkd {

namespace {

struct RowStats {
  std::vector<double> log_p, log_q;          // full softmax
  std::vector<double> log_phat, log_qhat;    // non-target renormalized (target slot unused)
  double log_pg, log_qg, log_png, log_qng;
};

RowStats row_stats(std::span<const double> zt, std::span<const double> zs, std::size_t g) {
  const std::size_t c = zt.size();
  const double lse_p = log_sum_exp(zt);
  const double lse_q = log_sum_exp(zs);
  const double lse_p_nt = log_sum_exp(zt, g);
  const double lse_q_nt = log_sum_exp(zs, g);
  RowStats r{std::vector<double>(c), std::vector<double>(c), std::vector<double>(c),
             std::vector<double>(c), 0, 0, 0, 0};
  for (std::size_t j = 0; j < c; ++j) {
    r.log_p[j] = zt[j] - lse_p;
    r.log_q[j] = zs[j] - lse_q;
    r.log_phat[j] = zt[j] - lse_p_nt;
    r.log_qhat[j] = zs[j] - lse_q_nt;
  }
  r.log_pg = r.log_p[g];
  r.log_qg = r.log_q[g];
  r.log_png = lse_p_nt - lse_p;
  r.log_qng = lse_q_nt - lse_q;
  return r;
}

void forward_row_grad(const RowStats& r, std::size_t g, const TokenWeights& w,
                      std::span<double> out) {
  const std::size_t c = out.size();
  const double p_ng = std::exp(r.log_png);
  const double q_ng = std::exp(r.log_qng);
  for (std::size_t i = 0; i < c; ++i) {
    const double q = std::exp(r.log_q[i]);
    const double p = std::exp(r.log_p[i]);
    double d_tkd, d_dkd;
    if (i == g) {
      d_tkd = q - p;
      d_dkd = 0.0;
    } else {
      const double qhat = std::exp(r.log_qhat[i]);
      d_tkd = qhat * (q_ng - p_ng);
      d_dkd = qhat - std::exp(r.log_phat[i]);
    }
    out[i] = w.binary * d_tkd + w.nontarget * d_dkd + w.full * (q - p);
  }
}

void reverse_row_grad(const RowStats& r, std::size_t g, const TokenWeights& w,
                      std::span<double> out) {
  const std::size_t c = out.size();
  double kl_rev = 0.0;
  double dkd_rev = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    kl_rev += std::exp(r.log_q[j]) * (r.log_q[j] - r.log_p[j]);
    if (j != g) dkd_rev += std::exp(r.log_qhat[j]) * (r.log_qhat[j] - r.log_phat[j]);
  }
  const double log_odds_gap = (r.log_qg - r.log_pg) - (r.log_qng - r.log_png);
  const double binary_scale = std::exp(r.log_qg) * std::exp(r.log_qng) * log_odds_gap;
  for (std::size_t i = 0; i < c; ++i) {
    const double q = std::exp(r.log_q[i]);
    const double d_full = q * (r.log_q[i] - r.log_p[i] - kl_rev);
    double d_tkd, d_dkd;
    if (i == g) {
      d_tkd = binary_scale;
      d_dkd = 0.0;
    } else {
      const double qhat = std::exp(r.log_qhat[i]);
      d_tkd = -binary_scale * qhat;
      d_dkd = qhat * (r.log_qhat[i] - r.log_phat[i] - dkd_rev);
    }
    out[i] = w.binary * d_tkd + w.nontarget * d_dkd + w.full * d_full;
  }
}

bool same_split(const TokenSplit& a, const TokenSplit& b) {
  return a.hard == b.hard && a.easy == b.easy;
}

}  // namespace

TokenSplit split_for(const LogitBatch& batch, const ObjectiveConfig& cfg) {
  if (cfg.mode != Mode::ATKD && cfg.mode != Mode::ReverseATKD) return {};
  return rank_and_split(teacher_unc(batch), batch.mask(), cfg.k_ratio);
}

LossGrad loss_grad(const LogitBatch& batch, const ObjectiveConfig& cfg, const TokenSplit& split) {
  LossGrad out;
  out.loss = objective_eval(batch, cfg, split);
  const auto weights = objective_weights(cfg, batch.mask(), split);
  const std::size_t c = batch.classes();
  out.grad.assign(batch.tokens() * c, 0.0);
  const bool reverse = is_reverse(cfg.mode);
  for (std::size_t t = 0; t < batch.tokens(); ++t) {
    if (!batch.mask()[t]) continue;
    const std::size_t g = batch.targets()[t];
    const RowStats r = row_stats(batch.teacher_row(t), batch.student_row(t), g);
    std::span<double> row(out.grad.data() + t * c, c);
    if (reverse) {
      reverse_row_grad(r, g, weights[t], row);
    } else {
      forward_row_grad(r, g, weights[t], row);
    }
  }
  return out;
}

LossGrad loss_grad(const LogitBatch& batch, const ObjectiveConfig& cfg) {
  cfg.validate();
  if (batch.active_count() == 0) throw EmptyBatch("objective requested over zero active tokens");
  return loss_grad(batch, cfg, split_for(batch, cfg));
}

double fd_check(const LogitBatch& batch, const ObjectiveConfig& cfg, double epsilon) {
  if (!(epsilon >= 1e-8 && epsilon <= 1e-3)) {
    throw InvalidInput("fd_check epsilon must lie in [1e-8, 1e-3], got " + std::to_string(epsilon));
  }
  cfg.validate();
  if (batch.active_count() == 0) throw EmptyBatch("objective requested over zero active tokens");
  const TokenSplit split = split_for(batch, cfg);
  const LossGrad analytic = loss_grad(batch, cfg, split);

  LogitBatch work = batch;
  const std::size_t c = batch.classes();
  double worst = 0.0;
  for (std::size_t t = 0; t < batch.tokens(); ++t) {
    if (!batch.mask()[t]) continue;
    for (std::size_t i = 0; i < c; ++i) {
      double& z = work.mutable_student()[t * c + i];
      const double z0 = z;
      z = z0 + epsilon;
      const double plus = objective_eval(work, cfg, split);
      z = z0 - epsilon;
      const double minus = objective_eval(work, cfg, split);
      if (!same_split(split_for(work, cfg), split)) {
        throw std::logic_error("easy/hard split moved under a student-logit perturbation");
      }
      z = z0;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic.grad[t * c + i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace atkd
