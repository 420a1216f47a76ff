// SPDX-License-Identifier: Apache-2.0
#include "atkd/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "atkd/error.hpp"
#include "atkd/prob.hpp"

namespace atkd {

namespace {

constexpr std::pair<Mode, std::string_view> kModeNames[] = {
    {Mode::ForwardKL, "forward_kl"},       {Mode::ReverseKL, "reverse_kl"},
    {Mode::TkdOnly, "tkd_only"},           {Mode::DkdOnly, "dkd_only"},
    {Mode::TkdPlusDkd, "tkd_plus_dkd"},    {Mode::AlphaTkdDkd, "alpha_tkd_dkd"},
    {Mode::ATKD, "atkd"},                  {Mode::ReverseATKD, "reverse_atkd"},
};

bool is_adaptive(Mode mode) { return mode == Mode::ATKD || mode == Mode::ReverseATKD; }

}  // namespace

std::string_view to_string(Mode mode) noexcept {
  for (const auto& [m, name] : kModeNames) {
    if (m == mode) return name;
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  for (const auto& [m, n] : kModeNames) {
    if (n == name) return m;
  }
  throw ConfigError("unknown objective mode '" + std::string(name) + "'");
}

bool is_reverse(Mode mode) noexcept {
  return mode == Mode::ReverseKL || mode == Mode::ReverseATKD;
}

void ObjectiveConfig::validate() const {
  if (to_string(mode) == "unknown") throw ConfigError("unknown objective mode");
  if (!(k_ratio >= 0.0 && k_ratio <= 1.0)) {
    throw ConfigError("k_ratio must lie in [0, 1], got " + std::to_string(k_ratio));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be finite and >= 0, got " + std::to_string(alpha));
  }
}

std::size_t hard_count(double k_ratio, std::size_t active) {
  const double raw = std::floor(k_ratio * static_cast<double>(active) + 0.5);
  if (raw <= 0.0) return 0;
  return std::min(active, static_cast<std::size_t>(raw));
}

TokenSplit rank_and_split(std::span<const double> unc, std::span<const std::uint8_t> mask,
                          double k_ratio) {
  if (unc.size() != mask.size()) throw DimensionError("unc and mask differ in length");
  if (!(k_ratio >= 0.0 && k_ratio <= 1.0)) {
    throw ConfigError("k_ratio must lie in [0, 1], got " + std::to_string(k_ratio));
  }
  std::vector<std::size_t> order;
  order.reserve(unc.size());
  for (std::size_t t = 0; t < unc.size(); ++t) {
    if (mask[t]) order.push_back(t);
  }
  if (order.empty()) throw EmptyBatch("cannot rank an all-masked batch");

  // Stable sort keeps ascending index among equal UnC.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return unc[a] > unc[b]; });

  const std::size_t n_hard = hard_count(k_ratio, order.size());
  TokenSplit split;
  split.hard.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hard));
  split.easy.assign(order.begin() + static_cast<std::ptrdiff_t>(n_hard), order.end());
  std::sort(split.hard.begin(), split.hard.end());
  std::sort(split.easy.begin(), split.easy.end());
  return split;
}

std::vector<std::uint8_t> indices_to_mask(std::span<const std::size_t> indices,
                                          std::size_t tokens) {
  std::vector<std::uint8_t> mask(tokens, 0);
  for (const std::size_t t : indices) {
    if (t >= tokens) throw IndexError("token index " + std::to_string(t) + " out of range");
    mask[t] = 1;
  }
  return mask;
}

std::vector<TokenWeights> objective_weights(const ObjectiveConfig& cfg,
                                            std::span<const std::uint8_t> mask,
                                            const TokenSplit& split) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  if (n == 0) throw EmptyBatch("objective requested over zero active tokens");
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<TokenWeights> w(mask.size());
  if (is_adaptive(cfg.mode)) {
    if (split.hard.size() + split.easy.size() != n) {
      throw DimensionError("token split does not cover the active tokens");
    }
    if (!split.hard.empty()) {
      const double wh = (1.0 - cfg.lambda) * (1.0 / static_cast<double>(split.hard.size()));
      for (const std::size_t t : split.hard) w[t] = {wh, wh, 0.0};
    }
    if (!split.easy.empty()) {
      const double we = cfg.lambda * (1.0 / static_cast<double>(split.easy.size()));
      for (const std::size_t t : split.easy) w[t] = {0.0, we, 0.0};
    }
    return w;
  }

  TokenWeights tw;
  switch (cfg.mode) {
    case Mode::ForwardKL:
    case Mode::ReverseKL:
      tw = {0.0, 0.0, inv_n};
      break;
    case Mode::TkdOnly:
      tw = {inv_n, 0.0, 0.0};
      break;
    case Mode::DkdOnly:
      tw = {0.0, inv_n, 0.0};
      break;
    case Mode::TkdPlusDkd:
      tw = {inv_n, inv_n, 0.0};
      break;
    case Mode::AlphaTkdDkd:
      tw = {cfg.alpha * inv_n, inv_n, 0.0};
      break;
    default:
      throw ConfigError("unsupported objective mode");
  }
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) w[t] = tw;
  }
  return w;
}

ReverseTerms reverse_token_terms(std::span<const double> teacher_logits,
                                 std::span<const double> student_logits, std::size_t target_index) {
  validate_logits(teacher_logits);
  validate_logits(student_logits);
  const std::size_t classes = teacher_logits.size();
  if (student_logits.size() != classes) throw DimensionError("teacher and student rows differ");
  if (target_index >= classes) throw IndexError("target index out of range");
  const std::size_t g = target_index;

  const double lse_p = log_sum_exp(teacher_logits);
  const double lse_q = log_sum_exp(student_logits);
  const double lse_p_nt = log_sum_exp(teacher_logits, g);
  const double lse_q_nt = log_sum_exp(student_logits, g);

  const double log_pg = teacher_logits[g] - lse_p;
  const double log_qg = student_logits[g] - lse_q;
  const double log_png = lse_p_nt - lse_p;
  const double log_qng = lse_q_nt - lse_q;

  ReverseTerms out;
  out.tkd = std::exp(log_qg) * (log_qg - log_pg) + std::exp(log_qng) * (log_qng - log_png);
  double dkd = 0.0;
  double full = 0.0;
  for (std::size_t j = 0; j < classes; ++j) {
    const double log_pj = teacher_logits[j] - lse_p;
    const double log_qj = student_logits[j] - lse_q;
    full += std::exp(log_qj) * (log_qj - log_pj);
    if (j == g) continue;
    const double log_phat = teacher_logits[j] - lse_p_nt;
    const double log_qhat = student_logits[j] - lse_q_nt;
    dkd += std::exp(log_qhat) * (log_qhat - log_phat);
  }
  out.tkd = std::max(out.tkd, 0.0);
  out.dkd = std::max(dkd, 0.0);
  out.kl_total = std::max(full, 0.0);
  return out;
}

double objective_eval(const LogitBatch& batch, const ObjectiveConfig& cfg, const TokenSplit& split) {
  const auto weights = objective_weights(cfg, batch.mask(), split);
  const bool reverse = is_reverse(cfg.mode);
  double loss = 0.0;
  for (std::size_t t = 0; t < batch.tokens(); ++t) {
    if (!batch.mask()[t]) continue;
    const TokenWeights& w = weights[t];
    if (reverse) {
      const ReverseTerms r =
          reverse_token_terms(batch.teacher_row(t), batch.student_row(t), batch.targets()[t]);
      loss += w.binary * r.tkd + w.nontarget * r.dkd + w.full * r.kl_total;
    } else {
      const TokenTerms f =
          token_decompose(batch.teacher_row(t), batch.student_row(t), batch.targets()[t]);
      loss += w.binary * f.tkd + w.nontarget * f.dkd + w.full * f.kl_total;
    }
  }
  return loss;
}

double objective_eval(const LogitBatch& batch, const ObjectiveConfig& cfg) {
  cfg.validate();
  if (batch.active_count() == 0) throw EmptyBatch("objective requested over zero active tokens");
  TokenSplit split;
  if (is_adaptive(cfg.mode)) split = rank_and_split(teacher_unc(batch), batch.mask(), cfg.k_ratio);
  return objective_eval(batch, cfg, split);
}

double atkd_loss(const LogitBatch& batch, const ObjectiveConfig& cfg) {
  ObjectiveConfig c = cfg;
  c.mode = Mode::ATKD;
  return objective_eval(batch, c);
}

double atkd_on_reverse(const LogitBatch& batch, const ObjectiveConfig& cfg) {
  ObjectiveConfig c = cfg;
  c.mode = Mode::ReverseATKD;
  return objective_eval(batch, c);
}

}  // namespace atkd
