// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-token split of the forward KL into a binary target/non-target term
// (tkd), a renormalized non-target term (dkd) and the teacher's non-target
// mass (unc):
//
//   KL(p || q) = KL(p_b || q_b) + unc * KL(p_hat || q_hat)

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace atkd {

/// Teacher/student logits for T tokens over C classes, row-major [T][C].
class LogitBatch {
 public:
  LogitBatch() = default;
  /// Validates shapes, target range on mask-true rows, mask values, and
  /// finiteness. Targets of mask-false rows are not inspected.
  LogitBatch(std::size_t tokens, std::size_t classes, std::vector<double> teacher,
             std::vector<double> student, std::vector<std::uint32_t> targets,
             std::vector<std::uint8_t> mask);

  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t classes() const noexcept { return classes_; }

  std::span<const double> teacher_row(std::size_t t) const {
    return {teacher_.data() + t * classes_, classes_};
  }
  std::span<const double> student_row(std::size_t t) const {
    return {student_.data() + t * classes_, classes_};
  }
  std::span<const double> teacher() const noexcept { return teacher_; }
  std::span<const double> student() const noexcept { return student_; }
  std::span<double> mutable_student() noexcept { return student_; }
  const std::vector<std::uint32_t>& targets() const noexcept { return targets_; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

  std::size_t active_count() const noexcept;

  /// Same logits and targets with a different mask.
  LogitBatch with_mask(std::vector<std::uint8_t> mask) const;

 private:
  std::size_t tokens_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> teacher_;
  std::vector<double> student_;
  std::vector<std::uint32_t> targets_;
  std::vector<std::uint8_t> mask_;
};

struct TokenTerms {
  double unc = 0.0;
  double tkd = 0.0;
  double dkd = 0.0;
  double kl_total = 0.0;
};

/// kl_total is the full-vocabulary KL, computed independently of tkd and dkd.
TokenTerms token_decompose(std::span<const double> teacher_logits,
                           std::span<const double> student_logits, std::size_t target_index);

/// Per-token terms; mask-false slots hold zeros.
struct TokenDecomposition {
  std::vector<double> unc;
  std::vector<double> tkd;
  std::vector<double> dkd;
  std::vector<double> kl_total;
  std::vector<std::uint8_t> mask;

  std::size_t size() const noexcept { return unc.size(); }
};

/// Never throws for an all-false mask; reductions over the result do.
TokenDecomposition batch_decompose(const LogitBatch& batch);

/// Teacher non-target mass per token (zero on mask-false rows).
std::vector<double> teacher_unc(const LogitBatch& batch);

/// Mean of `values` over mask-true slots; EmptyBatch if there are none.
double masked_mean(std::span<const double> values, std::span<const std::uint8_t> mask);

}  // namespace atkd
