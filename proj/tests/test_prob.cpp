// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <vector>

#include "atkd/error.hpp"
#include "atkd/prob.hpp"
#include "doctest.h"

using namespace atkd;

TEST_CASE("log_softmax of equal logits is uniform") {
  const std::vector<double> z{0, 0, 0};
  for (double v : log_softmax(z)) CHECK(v == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("log_softmax survives large logits") {
  const std::vector<double> z{1000, 0, 0};
  const auto lp = log_softmax(z);
  CHECK(std::abs(lp[0]) < 1e-12);
  CHECK(lp[1] == doctest::Approx(-1000.0).epsilon(1e-15));
  CHECK(std::isfinite(lp[2]));
  const std::vector<double> neg{-1e4, 1e4, 0};
  double s = 0;
  for (double v : log_softmax(neg)) s += std::exp(v);
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("log_softmax matches extended-precision values") {
  // mpmath, 40 digits.
  const std::vector<double> z{1, 2, 3};
  const auto lp = log_softmax(z);
  CHECK(std::abs(lp[0] - -2.4076059644443803045) < 1e-15);
  CHECK(std::abs(lp[1] - -1.4076059644443803045) < 1e-15);
  CHECK(std::abs(lp[2] - -0.4076059644443803045) < 1e-15);
}

TEST_CASE("log_softmax rejects bad input") {
  const std::vector<double> z{0, NAN, 1};
  CHECK_THROWS_WITH_AS(log_softmax(z), "non-finite logit at index 1", InvalidInput);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(log_softmax(one), InvalidInput);
}

TEST_CASE("log_softmax is shift invariant") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(11);
    for (auto& v : z) v = nd(rng);
    const double c = nd(rng) * 10;
    auto shifted = z;
    for (auto& v : shifted) v += c;
    const auto a = log_softmax(z), b = log_softmax(shifted);
    for (std::size_t j = 0; j < z.size(); ++j) CHECK(std::abs(a[j] - b[j]) <= 1e-12);
  }
}

TEST_CASE("binary_split") {
  const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  auto b = binary_split(uniform, 2);
  CHECK(b.p_target == 0.25);
  CHECK(b.p_nontarget == 0.75);

  const std::vector<double> onehot{0, 1, 0};
  b = binary_split(onehot, 1);
  CHECK(b.p_target == 1.0);
  CHECK(b.p_nontarget == 0.0);

  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  b = binary_split(p, 1);
  CHECK(b.p_target == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(b.p_nontarget == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::abs(b.p_target + b.p_nontarget - 1.0) < 1e-9);

  CHECK_THROWS_AS(binary_split(p, 4), IndexError);
}

TEST_CASE("nontarget_renorm examples") {
  auto r = nontarget_renorm(std::vector<double>{0, 0, 0}, 0);
  CHECK(r.values[0] == 0.0);
  CHECK(r.values[1] == doctest::Approx(0.5));
  CHECK(r.values[2] == doctest::Approx(0.5));

  r = nontarget_renorm(std::vector<double>{100, 1, 1, 1}, 0);
  CHECK(r.values[0] == 0.0);
  for (int j = 1; j < 4; ++j) CHECK(r.values[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // e/(e+e^2) and e^2/(e+e^2), mpmath.
  r = nontarget_renorm(std::vector<double>{1, 2, 3}, 2);
  CHECK(std::abs(r.values[0] - 0.26894142136999512075) < 1e-15);
  CHECK(std::abs(r.values[1] - 0.73105857863000487925) < 1e-15);
  CHECK(r.values[2] == 0.0);

  CHECK_THROWS_AS(nontarget_renorm(std::vector<double>{1.0}, 0), InvalidInput);
  CHECK_THROWS_AS(nontarget_renorm(std::vector<double>{1.0, 2.0}, 2), IndexError);
}

TEST_CASE("factorization p_j = p_hat_j * p_nontarget") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> z(2 + trial % 40);
    for (auto& v : z) v = nd(rng);
    const std::size_t g = trial % z.size();
    const auto p = softmax(z);
    const auto b = binary_split(p, g);
    const auto hat = nontarget_renorm(z, g);
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j == g) continue;
      CHECK(std::abs(p[j] - hat.values[j] * b.p_nontarget) <= 1e-12);
    }
    double s = 0;
    for (double v : hat.values) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("kl_div values and errors") {
  const std::vector<double> p{0.3, 0.7};
  CHECK(kl_div(p, p) == 0.0);
  CHECK(kl_div(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Term-by-term: 0.7 ln 7 + 0.2 ln 1 + 0.1 ln(1/7), evaluated with mpmath.
  CHECK(std::abs(kl_div(std::vector<double>{0.7, 0.2, 0.1}, std::vector<double>{0.1, 0.2, 0.7}) -
                 1.1675460894331879831) < 1e-14);
  CHECK_THROWS_AS(kl_div(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}),
                  InfiniteDivergence);
  CHECK_THROWS_AS(kl_div(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}), DimensionError);

  BinaryProb a{0.2, 0.8}, b{0.2, 0.8};
  CHECK(kl_div(a, b) == 0.0);
  b = {0.5, 0.5};
  CHECK(kl_div(a, b) > 0.0);
}

TEST_CASE("kl_div is non-negative and zero only at equality") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(6), w(6);
    for (auto& v : z) v = nd(rng);
    w = z;
    const auto p = softmax(z);
    CHECK(kl_div(p, p) == 0.0);
    w[trial % 6] += 0.01;
    CHECK(kl_div(p, softmax(w)) > 0.0);
  }
}
