// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <vector>

#include "atkd/error.hpp"
#include "atkd/objective.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace atkd;

namespace {

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::vector<std::uint8_t> all_on(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

}  // namespace

TEST_CASE("rank_and_split examples") {
  const std::vector<double> unc{0.9, 0.1, 0.5, 0.3};
  auto s = rank_and_split(unc, all_on(4), 0.5);
  CHECK(s.hard == std::vector<std::size_t>{0, 2});
  CHECK(s.easy == std::vector<std::size_t>{1, 3});

  s = rank_and_split(unc, all_on(4), 0.0);
  CHECK(s.hard.empty());
  CHECK(s.easy.size() == 4);
  s = rank_and_split(unc, all_on(4), 1.0);
  CHECK(s.hard.size() == 4);
  CHECK(s.easy.empty());

  // round(1.5) = 2 and ties resolve to the lower indices.
  s = rank_and_split(std::vector<double>{0.4, 0.4, 0.4}, all_on(3), 0.5);
  CHECK(s.hard == std::vector<std::size_t>{0, 1});
  CHECK(s.easy == std::vector<std::size_t>{2});

  CHECK_THROWS_AS(rank_and_split(unc, std::vector<std::uint8_t>(4, 0), 0.5), EmptyBatch);
  CHECK_THROWS_AS(rank_and_split(unc, all_on(4), 1.5), ConfigError);
}

TEST_CASE("rank_and_split partitions the active tokens") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 37;
    std::vector<double> unc(n);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t t = 0; t < n; ++t) {
      // Coarse values force ties.
      unc[t] = std::round(u(rng) * 5) / 5;
      mask[t] = u(rng) < 0.8;
    }
    mask[0] = 1;
    const double k = std::round(u(rng) * 10) / 10;
    const auto s = rank_and_split(unc, mask, k);
    std::vector<std::uint8_t> seen(n, 0);
    for (auto t : s.hard) ++seen[t];
    for (auto t : s.easy) ++seen[t];
    CHECK(seen == mask);
    const std::size_t active = std::count(mask.begin(), mask.end(), 1);
    CHECK(s.hard.size() == hard_count(k, active));
    double min_hard = 2, max_easy = -1;
    for (auto t : s.hard) min_hard = std::min(min_hard, unc[t]);
    for (auto t : s.easy) max_easy = std::max(max_easy, unc[t]);
    if (!s.hard.empty() && !s.easy.empty()) CHECK(min_hard >= max_easy);
    // Ties at the boundary go to the lower index.
    for (auto h : s.hard)
      for (auto e : s.easy)
        if (unc[h] == unc[e]) CHECK(h < e);
  }
}

TEST_CASE("self-distillation gives zero loss in every mode") {
  auto b = oracle::random_batch(3, 8, 10);
  std::vector<double> t(b.teacher().begin(), b.teacher().end());
  LogitBatch same(8, 10, t, t, b.targets(), b.mask());
  for (Mode m : kCoreModes) {
    ObjectiveConfig cfg{m, 0.3, 0.4, 0.7};
    CHECK(objective_eval(same, cfg) == 0.0);
  }
  CHECK(atkd_on_reverse(same, {}) == 0.0);
}

TEST_CASE("mode collapse identities are bitwise") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto b = oracle::random_batch(seed, 24, 13, 2.0, false);
    const double plus = objective_eval(b, {Mode::TkdPlusDkd});
    const double atkd = objective_eval(b, {Mode::ATKD, 1.0, 0.0});
    CHECK(bitwise_equal(plus, atkd));
    CHECK(bitwise_equal(objective_eval(b, {Mode::AlphaTkdDkd, 0.5, 0.2, 1.0}), plus));
    CHECK(bitwise_equal(objective_eval(b, {Mode::AlphaTkdDkd, 0.5, 0.2, 0.0}),
                        objective_eval(b, {Mode::DkdOnly})));
  }
}

TEST_CASE("ATKD matches the end-to-end oracle") {
  const auto b = oracle::random_batch(42, 8, 10);
  const double got = atkd_loss(b, {Mode::ATKD, 0.5, 0.2});
  CHECK(std::abs(got - double(oracle::atkd(b, 0.5, 0.2))) < 1e-12);
  for (double k : {0.0, 0.3, 1.0}) {
    for (double lambda : {0.0, 0.2, 1.0}) {
      CHECK(std::abs(atkd_loss(b, {Mode::ATKD, k, lambda}) - double(oracle::atkd(b, k, lambda))) <
            1e-12);
    }
  }
  const auto masked = oracle::random_batch(43, 30, 6, 2.0, false);
  CHECK(std::abs(atkd_loss(masked, {}) - double(oracle::atkd(masked, 0.5, 0.2))) < 1e-12);
}

TEST_CASE("reverse ATKD matches the oracle with swapped arguments") {
  const auto b = oracle::random_batch(44, 9, 7);
  CHECK(std::abs(atkd_on_reverse(b, {Mode::ATKD, 0.5, 0.2}) -
                 double(oracle::atkd(b, 0.5, 0.2, true))) < 1e-12);

  // Binary vocabulary: only the hard-set binary reverse KL survives.
  const auto b2 = oracle::random_batch(45, 10, 2);
  const auto split = rank_and_split(teacher_unc(b2), b2.mask(), 0.5);
  oracle::Real ref = 0;
  for (auto t : split.hard) ref += oracle::terms(b2.teacher_row(t), b2.student_row(t), b2.targets()[t], true).tkd;
  ref = 0.8L * ref / split.hard.size();
  CHECK(std::abs(atkd_on_reverse(b2, {}) - double(ref)) < 1e-12);
}

TEST_CASE("objective_eval against brute-force references") {
  const auto b = oracle::random_batch(77, 12, 9, 2.0, false);
  const std::size_t n = b.active_count();
  oracle::Real fwd = 0, rev = 0, tkd = 0, dkd = 0;
  for (std::size_t t = 0; t < b.tokens(); ++t) {
    if (!b.mask()[t]) continue;
    const auto f = oracle::terms(b.teacher_row(t), b.student_row(t), b.targets()[t]);
    const auto r = oracle::terms(b.teacher_row(t), b.student_row(t), b.targets()[t], true);
    fwd += f.kl_total;
    rev += r.kl_total;
    tkd += f.tkd;
    dkd += f.dkd;
  }
  CHECK(std::abs(objective_eval(b, {Mode::ForwardKL}) - double(fwd / n)) < 1e-12);
  CHECK(std::abs(objective_eval(b, {Mode::ReverseKL}) - double(rev / n)) < 1e-12);
  CHECK(std::abs(objective_eval(b, {Mode::TkdOnly}) - double(tkd / n)) < 1e-12);
  CHECK(std::abs(objective_eval(b, {Mode::DkdOnly}) - double(dkd / n)) < 1e-12);
  CHECK(std::abs(objective_eval(b, {Mode::TkdPlusDkd}) - double((tkd + dkd) / n)) < 1e-12);
  CHECK(std::abs(objective_eval(b, {Mode::AlphaTkdDkd, 0.5, 0.2, 0.25}) -
                 double((0.25L * tkd + dkd) / n)) < 1e-12);
}

TEST_CASE("raising only the student target logit toward the teacher lowers tkd, keeps dkd") {
  std::vector<double> t{3.0, 0.2, -0.4, 1.0}, s{0.0, 0.5, -1.0, 0.1};
  const auto before = token_decompose(t, s, 0);
  s[0] += 0.5;
  const auto after = token_decompose(t, s, 0);
  CHECK(after.tkd < before.tkd);
  CHECK(after.dkd == doctest::Approx(before.dkd).epsilon(1e-14));
}

TEST_CASE("configuration errors") {
  const auto b = oracle::random_batch(1, 4, 3);
  CHECK_THROWS_AS(objective_eval(b, {Mode::ATKD, 1.2}), ConfigError);
  CHECK_THROWS_AS(objective_eval(b, {Mode::ATKD, 0.5, -0.1}), ConfigError);
  CHECK_THROWS_AS(objective_eval(b, {Mode::AlphaTkdDkd, 0.5, 0.2, -1}), ConfigError);
  CHECK_THROWS_AS(objective_eval(b, {static_cast<Mode>(99)}), ConfigError);
  CHECK_THROWS_AS(parse_mode("nope"), ConfigError);
  for (Mode m : kCoreModes) CHECK(parse_mode(to_string(m)) == m);
  CHECK_THROWS_AS(objective_eval(b.with_mask({0, 0, 0, 0}), {}), EmptyBatch);
}

TEST_CASE("losses are non-negative") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = oracle::random_batch(seed, 10, 5);
    for (Mode m : kCoreModes) CHECK(objective_eval(b, {m}) >= 0.0);
    CHECK(atkd_on_reverse(b, {}) >= 0.0);
  }
}
