// SPDX-License-Identifier: Apache-2.0
#include "atkd/prob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "atkd/error.hpp"

namespace atkd {

void validate_logits(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw InvalidInput("logit vector needs at least 2 classes, got " +
                       std::to_string(logits.size()));
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw InvalidInput("non-finite logit at index " + std::to_string(i));
    }
  }
}

double log_sum_exp(std::span<const double> x, std::size_t skip) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j != skip) m = std::max(m, x[j]);
  }
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (j != skip) s += std::exp(x[j] - m);
  }
  return m + std::log(s);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  validate_logits(logits);
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

BinaryProb binary_split(std::span<const double> probs, std::size_t target_index) {
  if (target_index >= probs.size()) {
    throw IndexError("target index " + std::to_string(target_index) +
                     " out of range for " + std::to_string(probs.size()) + " classes");
  }
  double rest = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (j != target_index) rest += probs[j];
  }
  return {probs[target_index], rest};
}

NonTargetProb nontarget_renorm(std::span<const double> logits, std::size_t target_index) {
  if (logits.size() < 2) {
    throw InvalidInput("non-target set is empty for a single-class vector");
  }
  validate_logits(logits);
  if (target_index >= logits.size()) {
    throw IndexError("target index " + std::to_string(target_index) +
                     " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double lse = log_sum_exp(logits, target_index);
  NonTargetProb out{std::vector<double>(logits.size(), 0.0), target_index};
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != target_index) out.values[j] = std::exp(logits[j] - lse);
  }
  return out;
}

double kl_div(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_div shape mismatch: " + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    if (q[j] == 0.0) {
      throw InfiniteDivergence("kl_div is infinite: p > 0 and q = 0 at index " +
                               std::to_string(j));
    }
    acc += p[j] * (std::log(p[j]) - std::log(q[j]));
  }
  return std::max(acc, 0.0);
}

double kl_div(const BinaryProb& p, const BinaryProb& q) {
  const double pv[2] = {p.p_target, p.p_nontarget};
  const double qv[2] = {q.p_target, q.p_nontarget};
  return kl_div(std::span<const double>(pv), std::span<const double>(qv));
}

double kl_div(const NonTargetProb& p, const NonTargetProb& q) {
  if (p.target_index != q.target_index) {
    throw DimensionError("non-target distributions disagree on the target index");
  }
  return kl_div(std::span<const double>(p.values), std::span<const double>(q.values));
}

double kl_from_log(std::span<const double> log_p, std::span<const double> log_q) {
  if (log_p.size() != log_q.size()) {
    throw DimensionError("kl shape mismatch: " + std::to_string(log_p.size()) + " vs " +
                         std::to_string(log_q.size()));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < log_p.size(); ++j) {
    acc += std::exp(log_p[j]) * (log_p[j] - log_q[j]);
  }
  return acc;
}

}  // namespace atkd
