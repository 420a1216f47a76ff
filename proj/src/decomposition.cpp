// SPDX-License-Identifier: Apache-2.0
#include "atkd/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atkd/error.hpp"
#include "atkd/prob.hpp"

namespace atkd {

LogitBatch::LogitBatch(std::size_t tokens, std::size_t classes, std::vector<double> teacher,
                       std::vector<double> student, std::vector<std::uint32_t> targets,
                       std::vector<std::uint8_t> mask)
    : tokens_(tokens),
      classes_(classes),
      teacher_(std::move(teacher)),
      student_(std::move(student)),
      targets_(std::move(targets)),
      mask_(std::move(mask)) {
  if (classes_ < 2) throw InvalidInput("a logit batch needs at least 2 classes");
  if (teacher_.size() != tokens_ * classes_ || student_.size() != tokens_ * classes_) {
    throw DimensionError("teacher and student logits must both be " +
                         std::to_string(tokens_) + "x" + std::to_string(classes_));
  }
  if (targets_.size() != tokens_ || mask_.size() != tokens_) {
    throw DimensionError("targets and mask must have one entry per token");
  }
  for (std::size_t t = 0; t < tokens_; ++t) {
    if (mask_[t] > 1) throw InvalidInput("mask entry at token " + std::to_string(t) + " is not 0/1");
    if (mask_[t] && targets_[t] >= classes_) {
      throw IndexError("target " + std::to_string(targets_[t]) + " at token " +
                       std::to_string(t) + " out of range");
    }
  }
  for (std::size_t i = 0; i < teacher_.size(); ++i) {
    if (!std::isfinite(teacher_[i]) || !std::isfinite(student_[i])) {
      throw InvalidInput("non-finite logit at token " + std::to_string(i / classes_) +
                         ", class " + std::to_string(i % classes_));
    }
  }
}

std::size_t LogitBatch::active_count() const noexcept {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

LogitBatch LogitBatch::with_mask(std::vector<std::uint8_t> mask) const {
  return LogitBatch(tokens_, classes_, teacher_, student_, targets_, std::move(mask));
}

TokenTerms token_decompose(std::span<const double> teacher_logits,
                           std::span<const double> student_logits, std::size_t target_index) {
  validate_logits(teacher_logits);
  validate_logits(student_logits);
  const std::size_t classes = teacher_logits.size();
  if (student_logits.size() != classes) {
    throw DimensionError("teacher and student rows differ in size");
  }
  if (target_index >= classes) {
    throw IndexError("target index " + std::to_string(target_index) + " out of range");
  }
  const std::size_t g = target_index;

  const double lse_p = log_sum_exp(teacher_logits);
  const double lse_q = log_sum_exp(student_logits);
  const double lse_p_nt = log_sum_exp(teacher_logits, g);
  const double lse_q_nt = log_sum_exp(student_logits, g);

  // Binary marginals in log space.
  const double log_pg = teacher_logits[g] - lse_p;
  const double log_qg = student_logits[g] - lse_q;
  const double log_png = lse_p_nt - lse_p;
  const double log_qng = lse_q_nt - lse_q;

  TokenTerms out;
  out.unc = std::exp(log_png);
  out.tkd = std::exp(log_pg) * (log_pg - log_qg) + out.unc * (log_png - log_qng);

  double dkd = 0.0;
  double full = 0.0;
  for (std::size_t j = 0; j < classes; ++j) {
    const double log_pj = teacher_logits[j] - lse_p;
    const double log_qj = student_logits[j] - lse_q;
    full += std::exp(log_pj) * (log_pj - log_qj);
    if (j == g) continue;
    const double log_phat = teacher_logits[j] - lse_p_nt;
    const double log_qhat = student_logits[j] - lse_q_nt;
    dkd += std::exp(log_phat) * (log_phat - log_qhat);
  }
  // Roundoff can leave values a few ulps below zero when p ~ q.
  out.tkd = std::max(out.tkd, 0.0);
  out.dkd = std::max(dkd, 0.0);
  out.kl_total = std::max(full, 0.0);
  return out;
}

TokenDecomposition batch_decompose(const LogitBatch& batch) {
  const std::size_t n = batch.tokens();
  TokenDecomposition out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                         std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), batch.mask()};
  for (std::size_t t = 0; t < n; ++t) {
    if (!batch.mask()[t]) continue;
    const TokenTerms terms =
        token_decompose(batch.teacher_row(t), batch.student_row(t), batch.targets()[t]);
    out.unc[t] = terms.unc;
    out.tkd[t] = terms.tkd;
    out.dkd[t] = terms.dkd;
    out.kl_total[t] = terms.kl_total;
  }
  return out;
}

std::vector<double> teacher_unc(const LogitBatch& batch) {
  std::vector<double> unc(batch.tokens(), 0.0);
  for (std::size_t t = 0; t < batch.tokens(); ++t) {
    if (!batch.mask()[t]) continue;
    const auto row = batch.teacher_row(t);
    const std::size_t g = batch.targets()[t];
    unc[t] = std::exp(log_sum_exp(row, g) - log_sum_exp(row));
  }
  return unc;
}

double masked_mean(std::span<const double> values, std::span<const std::uint8_t> mask) {
  if (values.size() != mask.size()) throw DimensionError("values and mask differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (!mask[t]) continue;
    sum += values[t];
    ++n;
  }
  if (n == 0) throw EmptyBatch("no mask-true tokens to reduce over");
  return sum / static_cast<double>(n);
}

}  // namespace atkd
