// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "atkd/error.hpp"
#include "atkd/grad.hpp"
#include "atkd/tiny_lm.hpp"
#include "doctest.h"

using namespace atkd;

namespace {

ModelConfig micro(std::uint64_t seed = 3) {
  ModelConfig c;
  c.vocab_size = 11;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.context_len = 8;
  c.seed = seed;
  return c;
}

ModelConfig small(std::uint64_t seed = 9) {
  ModelConfig c;
  c.vocab_size = 13;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 4;
  c.context_len = 12;
  c.seed = seed;
  return c;
}

// Larger-than-default weights so the nonlinearities are exercised.
TinyLM scaled(const ModelConfig& c, float factor) {
  TinyLM m(c);
  for (float& p : m.mutable_params()) p *= factor;
  return m;
}

// Unit-scale token and position embeddings with the default block init. Keeps
// the residual stream well away from the layer-norm singularity so central
// differences with a 1e-3 step stay accurate.
TinyLM fd_model(const ModelConfig& c) {
  TinyLM m(c);
  const std::size_t embed = (std::size_t{c.vocab_size} + c.context_len) * c.d_model;
  for (std::size_t i = 0; i < embed; ++i) m.mutable_params()[i] *= 50.0f;
  return m;
}

std::vector<std::uint32_t> tokens_for(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> t(n);
  for (auto& x : t) x = static_cast<std::uint32_t>(rng() % c.vocab_size);
  return t;
}

// Straight-line forward pass written directly against the documented layout.
// Scalar loops only, one position at a time, long double throughout.
std::vector<double> reference_forward(const TinyLM& m, const std::vector<std::uint32_t>& tok) {
  using LD = long double;
  const auto& c = m.config();
  const std::size_t d = c.d_model, V = c.vocab_size, H = c.n_heads, hd = d / H, T = tok.size();
  const auto P = m.params();
  std::size_t at = 0;
  auto next = [&](std::size_t n) {
    const std::size_t o = at;
    at += n;
    return o;
  };
  const std::size_t wte = next(V * d), wpe = next(c.context_len * d);

  std::vector<std::vector<LD>> x(T, std::vector<LD>(d));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < d; ++j) x[t][j] = LD(P[wte + tok[t] * d + j]) + LD(P[wpe + t * d + j]);

  auto ln = [&](const std::vector<LD>& v, std::size_t g, std::size_t b) {
    LD mu = 0;
    for (LD e : v) mu += e;
    mu /= LD(v.size());
    LD var = 0;
    for (LD e : v) var += (e - mu) * (e - mu);
    var /= LD(v.size());
    std::vector<LD> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j)
      out[j] = (v[j] - mu) / std::sqrt(var + LD(1e-5)) * LD(P[g + j]) + LD(P[b + j]);
    return out;
  };
  auto affine = [&](const std::vector<LD>& v, std::size_t w, std::size_t b, std::size_t out_n) {
    std::vector<LD> out(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
      LD s = P[b + o];
      for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * LD(P[w + i * out_n + o]);
      out[o] = s;
    }
    return out;
  };

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::size_t g1 = next(d), b1 = next(d), wqkv = next(3 * d * d), bqkv = next(3 * d);
    const std::size_t wo = next(d * d), bo = next(d), g2 = next(d), b2 = next(d);
    const std::size_t wfc = next(4 * d * d), bfc = next(4 * d), wpr = next(4 * d * d), bpr = next(d);
    std::vector<std::vector<LD>> qkv(T);
    for (std::size_t t = 0; t < T; ++t) qkv[t] = affine(ln(x[t], g1, b1), wqkv, bqkv, 3 * d);
    std::vector<std::vector<LD>> attn(T, std::vector<LD>(d, 0));
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t h = 0; h < H; ++h) {
        std::vector<LD> s(t + 1);
        for (std::size_t u = 0; u <= t; ++u) {
          LD dot = 0;
          for (std::size_t j = 0; j < hd; ++j) dot += qkv[t][h * hd + j] * qkv[u][d + h * hd + j];
          s[u] = dot / std::sqrt(LD(hd));
        }
        const LD mx = *std::max_element(s.begin(), s.end());
        LD z = 0;
        for (LD& e : s) z += (e = std::exp(e - mx));
        for (std::size_t u = 0; u <= t; ++u)
          for (std::size_t j = 0; j < hd; ++j)
            attn[t][h * hd + j] += s[u] / z * qkv[u][2 * d + h * hd + j];
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      const auto proj = affine(attn[t], wo, bo, d);
      for (std::size_t j = 0; j < d; ++j) x[t][j] += proj[j];
      auto f = affine(ln(x[t], g2, b2), wfc, bfc, 4 * d);
      for (LD& e : f) {
        const LD k = std::sqrt(LD(2) / LD(3.14159265358979323846264338327950288L));
        e = LD(0.5) * e * (1 + std::tanh(k * (e + LD(0.044715) * e * e * e)));
      }
      const auto out = affine(f, wpr, bpr, d);
      for (std::size_t j = 0; j < d; ++j) x[t][j] += out[j];
    }
  }
  const std::size_t gf = next(d), bf = next(d), wh = next(d * V), bh = next(V);
  REQUIRE(at == P.size());
  std::vector<double> logits;
  for (std::size_t t = 0; t < T; ++t) {
    const auto z = affine(ln(x[t], gf, bf), wh, bh, V);
    for (LD e : z) logits.push_back(static_cast<double>(e));
  }
  return logits;
}

double rel_err(double a, double n, double floor) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

}  // namespace

TEST_CASE("parameter count formula") {
  for (const auto& c : {micro(), small()}) {
    const std::size_t d = c.d_model, V = c.vocab_size, L = c.n_layers;
    const std::size_t expect =
        V * d + c.context_len * d + L * (12 * d * d + 13 * d) + 2 * d + d * V + V;
    CHECK(parameter_count(c) == expect);
    CHECK(TinyLM(c).size() == expect);
  }
  CHECK(parameter_count(micro()) == 1139);
}

TEST_CASE("config validation") {
  auto c = micro();
  c.n_heads = 3;
  CHECK_THROWS_AS(TinyLM{c}, ConfigError);
  c = micro();
  c.context_len = 1;
  CHECK_THROWS_AS(TinyLM{c}, ConfigError);
  c = micro();
  c.vocab_size = 0;
  CHECK_THROWS_AS(TinyLM{c}, ConfigError);
  CHECK_THROWS_AS(TinyLM(micro(), std::vector<float>(10)), DimensionError);
}

TEST_CASE("flat parameters round-trip bitwise") {
  TinyLM a(small());
  std::vector<float> v(a.params().begin(), a.params().end());
  TinyLM b(small(), v);
  CHECK(std::equal(b.params().begin(), b.params().end(), v.begin(), v.end()));
}

TEST_CASE("same seed gives same weights, different seed differs") {
  TinyLM a(small(1)), b(small(1)), c(small(2));
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}

TEST_CASE("zero head predicts uniformly") {
  TinyLM m(small());
  m.zero_head();
  const auto tok = tokens_for(m.config(), 10, 1);
  const auto z = forward(m, tok);
  for (double v : z) CHECK(v == 0.0);
  CHECK(perplexity(m, tokens_for(m.config(), 50, 2)) == doctest::Approx(13.0).epsilon(1e-12));
}

TEST_CASE("forward input errors") {
  TinyLM m(micro());
  std::vector<std::uint32_t> too_long(9, 0);
  CHECK_THROWS_AS(forward(m, too_long), InvalidInput);
  std::vector<std::uint32_t> bad{1, 2, 11};
  CHECK_THROWS_AS(forward(m, bad), InvalidInput);
  std::vector<std::uint32_t> none;
  CHECK_THROWS_AS(forward(m, none), InvalidInput);
  std::vector<std::uint32_t> six(6, 0);
  CHECK_THROWS_AS(forward(m, six, 2, 4), DimensionError);
}

TEST_CASE("causality at every block output and at the logits") {
  const TinyLM m = scaled(small(), 20.0f);
  const std::size_t T = m.config().context_len, V = m.config().vocab_size, d = m.config().d_model;
  auto tok = tokens_for(m.config(), T, 5);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    ForwardState s0, s1;
    const auto z0 = forward(m, tok, 1, T, Precision::Float64, &s0);
    auto changed = tok;
    changed[t + 1] = (changed[t + 1] + 1) % m.config().vocab_size;
    const auto z1 = forward(m, changed, 1, T, Precision::Float64, &s1);
    CHECK(std::equal(z0.begin(), z0.begin() + (t + 1) * V, z1.begin()));
    CHECK_FALSE(std::equal(z0.begin(), z0.end(), z1.begin()));
    const auto b0 = block_outputs(s0), b1 = block_outputs(s1);
    REQUIRE(b0.size() == 2);
    for (std::size_t l = 0; l < b0.size(); ++l) {
      CHECK(std::equal(b0[l].begin(), b0[l].begin() + (t + 1) * d, b1[l].begin()));
    }
  }
}

TEST_CASE("forward matches straight-line reference on a fixed 8-token input") {
  const TinyLM m = scaled(small(17), 15.0f);
  const std::vector<std::uint32_t> tok{3, 1, 4, 1, 5, 9, 2, 6};
  const auto z = forward(m, tok);
  const auto ref = reference_forward(m, tok);
  REQUIRE(z.size() == ref.size());
  double worst = 0;
  for (std::size_t i = 0; i < z.size(); ++i) worst = std::max(worst, rel_err(z[i], ref[i], 1e-9));
  CHECK(worst < 1e-10);
  const auto z32 = forward(m, tok, 1, tok.size(), Precision::Float32);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z32[i] == doctest::Approx(ref[i]).epsilon(1e-3));
}

TEST_CASE("batched forward equals per-sequence forward") {
  const TinyLM m = scaled(small(), 10.0f);
  const auto tok = tokens_for(m.config(), 3 * 7, 8);
  const auto all = forward(m, tok, 3, 7);
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<std::uint32_t> one(tok.begin() + b * 7, tok.begin() + (b + 1) * 7);
    const auto z = forward(m, one);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(all[b * z.size() + i] == doctest::Approx(z[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward is deterministic") {
  const TinyLM m(small());
  const auto tok = tokens_for(m.config(), 12, 4);
  CHECK(forward(m, tok) == forward(m, tok));
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
  const TinyLM m(micro());
  const auto tok = tokens_for(m.config(), 8, 1);
  const std::vector<double> g(8 * 11, 0.0);
  const auto pg = backward(m, tok, g);
  REQUIRE(pg.size() == m.size());
  for (double v : pg) CHECK(v == 0.0);
  CHECK_THROWS_AS(backward(m, tok, std::vector<double>(5)), DimensionError);
  ForwardState empty;
  CHECK_THROWS_AS(backward(m, empty, g), InvalidInput);
}

namespace {

// Central differences in parameter space. The perturbation actually applied is
// whatever the float storage can represent, so that is what we divide by.
template <class Loss>
double fd_param_check(const TinyLM& m, const std::vector<double>& analytic, Loss loss, double eps,
                      double floor) {
  double worst = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    TinyLM up = m, down = m;
    const float base = m.params()[i];
    up.mutable_params()[i] = static_cast<float>(base + eps);
    down.mutable_params()[i] = static_cast<float>(base - eps);
    const double h = double(up.params()[i]) - double(down.params()[i]);
    const double numeric = (loss(up) - loss(down)) / h;
    worst = std::max(worst, rel_err(analytic[i], numeric, floor));
  }
  return worst;
}

}  // namespace

TEST_CASE("backward matches finite differences: sum of logits at one position") {
  const TinyLM m = fd_model(micro());
  const auto tok = tokens_for(m.config(), 8, 12);
  const std::size_t V = m.config().vocab_size, pos = 5;
  std::vector<double> g(8 * V, 0.0);
  std::fill(g.begin() + pos * V, g.begin() + (pos + 1) * V, 1.0);
  const auto analytic = backward(m, tok, g);
  auto loss = [&](const TinyLM& mm) {
    const auto z = forward(mm, tok);
    return std::accumulate(z.begin() + pos * V, z.begin() + (pos + 1) * V, 0.0);
  };
  CHECK(fd_param_check(m, analytic, loss, 1e-3, 1e-4) <= 1e-3);
}

TEST_CASE("backward matches finite differences: random upstream gradient") {
  const TinyLM m = fd_model(micro(5));
  const auto tok = tokens_for(m.config(), 8, 13);
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01;
  std::vector<double> g(8 * 11);
  for (double& v : g) v = n01(rng);
  const auto analytic = backward(m, tok, g);
  auto loss = [&](const TinyLM& mm) {
    const auto z = forward(mm, tok);
    return std::inner_product(z.begin(), z.end(), g.begin(), 0.0);
  };
  CHECK(fd_param_check(m, analytic, loss, 1e-3, 1e-4) <= 1e-3);
}

TEST_CASE("float and double backward agree") {
  const TinyLM m = fd_model(small());
  const auto tok = tokens_for(m.config(), 2 * 12, 3);
  std::vector<double> g(2 * 12 * 13);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (double& v : g) v = n01(rng);
  ForwardState s32, s64;
  forward(m, tok, 2, 12, Precision::Float32, &s32);
  forward(m, tok, 2, 12, Precision::Float64, &s64);
  const auto g32 = backward(m, s32, g), g64 = backward(m, s64, g);
  double scale = 0, diff = 0;
  for (std::size_t i = 0; i < g64.size(); ++i) {
    scale = std::max(scale, std::fabs(g64[i]));
    diff = std::max(diff, std::fabs(g32[i] - g64[i]));
  }
  CHECK(diff / scale < 1e-4);
}

TEST_CASE("end-to-end distillation gradient through the model matches finite differences") {
  const TinyLM teacher = scaled(micro(100), 40.0f);
  const TinyLM student = fd_model(micro(200));
  const std::vector<std::uint32_t> seq{1, 7, 3, 3, 0, 10, 4, 8, 2};
  const std::vector<std::uint32_t> in(seq.begin(), seq.end() - 1);
  const std::vector<std::uint32_t> targets(seq.begin() + 1, seq.end());
  const std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0, 1, 1};
  const auto zt = forward(teacher, in);

  for (Mode mode : {Mode::ATKD, Mode::ForwardKL, Mode::ReverseATKD}) {
    CAPTURE(to_string(mode));
    const ObjectiveConfig cfg{mode, 0.5, 0.2};
    auto batch_for = [&](const TinyLM& s) {
      return LogitBatch(8, 11, zt, forward(s, in), targets, mask);
    };
    const auto b0 = batch_for(student);
    const auto split = split_for(b0, cfg);
    const auto lg = loss_grad(b0, cfg, split);
    const auto analytic = backward(student, in, lg.grad);
    auto loss = [&](const TinyLM& s) { return objective_eval(batch_for(s), cfg, split); };
    CHECK(fd_param_check(student, analytic, loss, 1e-3, 1e-4) <= 1e-3);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  TinyLM m(micro());
  const std::vector<float> before(m.params().begin(), m.params().end());
  AdamState st;
  adam_step(m, st, std::vector<double>(m.size(), 0.0), 0.1);
  CHECK(std::equal(before.begin(), before.end(), m.params().begin()));
  CHECK(st.step == 1);
}

TEST_CASE("adam: one bias-corrected step on a scalar") {
  // m = 0.1, v = 0.001; corrected both to 1 -> step = lr * 1 / (1 + 1e-8).
  std::vector<float> p{2.0f};
  AdamState st;
  const std::vector<double> g{1.0};
  adam_step(p, st, g, 0.1);
  CHECK(double(p[0]) == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-7));
  CHECK(st.m[0] == doctest::Approx(0.1));
  CHECK(st.v[0] == doctest::Approx(0.001));
}

TEST_CASE("adam: identical inputs give identical updates") {
  TinyLM a(micro()), b(micro());
  AdamState sa, sb;
  std::vector<double> g(a.size());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (double& v : g) v = n01(rng);
  for (int i = 0; i < 3; ++i) {
    adam_step(a, sa, g, 1e-2);
    adam_step(b, sb, g, 1e-2);
  }
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}

TEST_CASE("adam: non-finite gradient raises and leaves parameters alone") {
  TinyLM m(micro());
  const std::vector<float> before(m.params().begin(), m.params().end());
  AdamState st;
  std::vector<double> g(m.size(), 0.5);
  g[17] = std::nan("");
  try {
    adam_step(m, st, g, 0.1);
    FAIL("expected TrainingDivergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.step() == 1);
  }
  CHECK(std::equal(before.begin(), before.end(), m.params().begin()));
  CHECK(st.step == 0);
  CHECK_THROWS_AS(adam_step(m, st, std::vector<double>(3), 0.1), DimensionError);
}

TEST_CASE("perplexity matches an independent log-loss accumulation") {
  const TinyLM m = scaled(small(), 10.0f);
  const std::size_t ctx = m.config().context_len, V = m.config().vocab_size;
  const auto tok = tokens_for(m.config(), 5 * ctx + 7, 21);
  long double nll = 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + 1 < tok.size(); start += ctx) {
    const std::size_t len = std::min(ctx, tok.size() - start);
    std::vector<std::uint32_t> w(tok.begin() + start, tok.begin() + start + len);
    const auto z = reference_forward(m, w);
    for (std::size_t i = 0; i + 1 < len; ++i) {
      long double mx = z[i * V], s = 0;
      for (std::size_t c = 0; c < V; ++c) mx = std::max<long double>(mx, z[i * V + c]);
      for (std::size_t c = 0; c < V; ++c) s += std::exp((long double)z[i * V + c] - mx);
      nll += mx + std::log(s) - z[i * V + w[i + 1]];
      ++count;
    }
  }
  const double expect = std::exp(static_cast<double>(nll / count));
  CHECK(perplexity(m, tok) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(perplexity(m, tok, Precision::Float32) == doctest::Approx(expect).epsilon(1e-4));
  CHECK_THROWS_AS(perplexity(m, std::vector<std::uint32_t>{1}), InvalidInput);
}

TEST_CASE("training on a single repeated token drives perplexity to 1") {
  TinyLM m(micro());
  const std::vector<std::uint32_t> tok(8, 4);
  AdamState st;
  const std::size_t V = 11;
  for (int step = 0; step < 300; ++step) {
    ForwardState s;
    const auto z = forward(m, tok, 1, 8, Precision::Float64, &s);
    std::vector<double> g(z.size(), 0.0);
    for (std::size_t i = 0; i + 1 < 8; ++i) {
      double mx = *std::max_element(z.begin() + i * V, z.begin() + (i + 1) * V), s2 = 0;
      for (std::size_t c = 0; c < V; ++c) s2 += std::exp(z[i * V + c] - mx);
      for (std::size_t c = 0; c < V; ++c) g[i * V + c] = std::exp(z[i * V + c] - mx) / s2 / 7.0;
      g[i * V + 4] -= 1.0 / 7.0;
    }
    adam_step(m, st, backward(m, s, g), 1e-2);
  }
  CHECK(perplexity(m, tok) < 1.01);
}

TEST_CASE("interpolate") {
  const std::vector<double> t0{0, 2}, t1{1, 4};
  CHECK(interpolate(t0, t1, 0.5) == std::vector<double>{1.5, 5.0});
  CHECK(interpolate(t0, t1, 0.0) == t1);
  CHECK(interpolate(t0, t1, -1.0) == t0);
  CHECK_THROWS_AS(interpolate(t0, std::vector<double>{1}, 0.5), DimensionError);

  const TinyLM a(small(1)), b(small(2));
  const auto at0 = interpolate(a.params(), b.params(), 0.0);
  CHECK(std::equal(at0.begin(), at0.end(), b.params().begin()));
  const auto atm1 = interpolate(a.params(), b.params(), -1.0);
  CHECK(std::equal(atm1.begin(), atm1.end(), a.params().begin()));
}

TEST_CASE("sampling is seeded and stays in vocabulary") {
  const TinyLM m = scaled(small(), 10.0f);
  std::mt19937_64 r1(5), r2(5);
  const auto s1 = sample(m, {1, 2}, 30, r1);
  const auto s2 = sample(m, {1, 2}, 30, r2);
  CHECK(s1 == s2);
  CHECK(s1.size() == 32);
  for (auto t : s1) CHECK(t < 13u);
  std::mt19937_64 r3(5);
  CHECK_THROWS_AS(sample(m, {}, 3, r3), InvalidInput);
}
