// SPDX-License-Identifier: Apache-2.0
#include "atkd/harness.hpp"

#include <fmt/format.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "atkd/csv.hpp"
#include "atkd/decomposition.hpp"
#include "atkd/error.hpp"
#include "atkd/grad.hpp"
#include "atkd/prob.hpp"

namespace atkd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::json train_echo(const TrainOptions& o) {
  return {{"steps", o.steps},      {"batch_size", o.batch_size},
          {"lr", o.lr},            {"warmup", o.warmup},
          {"eval_interval", o.eval_interval},
          {"eval_tokens", o.eval_tokens},
          {"precision", o.precision == Precision::Float32 ? "float32" : "float64"},
          {"ce_mix", o.ce_mix}};
}

// Mean next-token cross-entropy over mask-true rows; adds weight * d/dz into grad.
double cross_entropy(std::span<const double> logits, std::span<const std::uint32_t> targets,
                     std::span<const std::uint8_t> mask, std::size_t vocab, double weight,
                     std::span<double> grad) {
  std::size_t active = 0;
  for (auto m : mask) active += m;
  if (active == 0) return 0.0;
  const double inv = 1.0 / double(active);
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask[t]) continue;
    const auto z = logits.subspan(t * vocab, vocab);
    const double lse = log_sum_exp(z);
    loss += lse - z[targets[t]];
    for (std::size_t c = 0; c < vocab; ++c) grad[t * vocab + c] += weight * inv * std::exp(z[c] - lse);
    grad[t * vocab + targets[t]] -= weight * inv;
  }
  return loss * inv;
}

struct Tracker {
  double interval_loss = 0.0;
  std::size_t interval_steps = 0;

  void add(double loss) {
    interval_loss += loss;
    ++interval_steps;
  }
  EvalPoint close(std::uint64_t step, double ppl) {
    EvalPoint p{step, interval_steps ? interval_loss / double(interval_steps) : 0.0, ppl};
    interval_loss = 0.0;
    interval_steps = 0;
    return p;
  }
};

bool eval_due(std::uint64_t done, const TrainOptions& o) {
  return done % o.eval_interval == 0 || done == o.steps;
}

void check_perplexity(double ppl, const std::string& label, std::uint64_t step) {
  if (!std::isfinite(ppl)) {
    throw TrainingDivergence(label + ": validation perplexity is not finite at step " +
                                 std::to_string(step),
                             static_cast<std::int64_t>(step));
  }
}

void require_finite(std::span<const double> logits, const std::string& who, std::uint64_t step) {
  if (!std::all_of(logits.begin(), logits.end(), [](double z) { return std::isfinite(z); })) {
    throw TrainingDivergence(fmt::format("{}: non-finite logits at step {}", who, step),
                             static_cast<std::int64_t>(step));
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::span<const std::uint32_t> eval_tokens(const Corpus& corpus, const TrainOptions& opts) {
  std::span<const std::uint32_t> v(corpus.val);
  if (opts.eval_tokens && opts.eval_tokens < v.size()) v = v.first(opts.eval_tokens);
  return v;
}

TrainResult train_teacher(const Corpus& corpus, ModelConfig cfg, const TrainOptions& opts,
                          std::uint64_t data_seed, const std::string& label, const Logger& log) {
  opts.validate();
  if (cfg.vocab_size == 0) cfg.vocab_size = corpus.vocab_size();
  if (cfg.vocab_size != corpus.vocab_size()) {
    throw ConfigError(fmt::format("{}: vocab_size {} does not match the corpus ({})", label,
                                  cfg.vocab_size, corpus.vocab_size()));
  }
  const auto t0 = Clock::now();
  TinyLM model(cfg);
  TrainResult r;
  r.initial = make_checkpoint(model, 0, corpus.hash);
  r.record.experiment = "train_teacher";
  r.record.label = label;
  r.record.seed = cfg.seed;
  r.record.config = {{"model", model_to_json(cfg)}, {"train", train_echo(opts)},
                     {"data_seed", data_seed}};

  const std::size_t B = opts.batch_size, T = cfg.context_len, V = cfg.vocab_size;
  BatchSampler sampler(corpus.train, B, T, data_seed);
  const auto val = eval_tokens(corpus, opts);
  const std::vector<std::uint8_t> all(B * T, 1);
  AdamState adam;
  Tracker tracker;
  for (std::uint64_t step = 0; step < opts.steps; ++step) {
    const TokenBatch b = sampler.next();
    ForwardState state;
    const auto z = forward(model, b.inputs, B, T, opts.precision, &state);
    require_finite(z, label, step + 1);
    std::vector<double> grad(z.size(), 0.0);
    const double loss = cross_entropy(z, b.targets, all, V, 1.0, grad);
    if (!std::isfinite(loss)) {
      throw TrainingDivergence(fmt::format("{}: non-finite loss at step {}", label, step + 1),
                               static_cast<std::int64_t>(step + 1));
    }
    adam_step(model, adam, backward(model, state, grad), opts.learning_rate(step));
    r.losses.push_back(loss);
    tracker.add(loss);
    if (eval_due(step + 1, opts)) {
      const double ppl = perplexity(model, val);
      check_perplexity(ppl, label, step + 1);
      r.record.evals.push_back(tracker.close(step + 1, ppl));
      if (log) log(fmt::format("{} step {} loss {:.4f} val_ppl {:.4f}", label, step + 1,
                               r.record.evals.back().train_loss, ppl));
    }
  }
  r.record.final_ppl = r.record.evals.back().val_ppl;
  if (!(r.record.final_ppl < double(V))) {
    throw TrainingFailure(fmt::format("{}: validation perplexity {:.4f} is not below the uniform "
                                      "baseline {}",
                                      label, r.record.final_ppl, V));
  }
  r.checkpoint = make_checkpoint(model, opts.steps, corpus.hash);
  r.record.wall_time_s = seconds_since(t0);
  return r;
}

std::string_view to_string(TokenSet s) noexcept {
  switch (s) {
    case TokenSet::Full: return "full";
    case TokenSet::Hard: return "hard_only";
    case TokenSet::Easy: return "easy_only";
  }
  return "unknown";
}

std::vector<std::uint8_t> token_set_mask(std::span<const double> unc, TokenSet set,
                                         double k_ratio) {
  const std::vector<std::uint8_t> all(unc.size(), 1);
  if (set == TokenSet::Full) return all;
  const TokenSplit split = rank_and_split(unc, all, k_ratio);
  return indices_to_mask(set == TokenSet::Hard ? split.hard : split.easy, unc.size());
}

std::vector<TrainResult> distill_group(const Corpus& corpus, const Checkpoint& teacher,
                                       const std::vector<StudentRun>& runs,
                                       const TrainOptions& opts, std::uint64_t data_seed,
                                       const Logger& log) {
  opts.validate();
  if (runs.empty()) return {};
  const std::uint32_t V = corpus.vocab_size();
  if (teacher.config.vocab_size != V) {
    throw ConfigError(fmt::format("teacher vocabulary {} does not match the corpus ({})",
                                  teacher.config.vocab_size, V));
  }
  if (teacher.corpus_hash != corpus.hash) {
    throw ConfigError("teacher was trained on a different corpus (hash " +
                      to_hex(teacher.corpus_hash) + ", corpus " + to_hex(corpus.hash) + ")");
  }
  const std::size_t T = runs.front().config.context_len;
  const std::size_t B = opts.batch_size, N = B * T;
  bool needs_unc = false;
  for (const auto& run : runs) {
    run.objective.validate();
    if (run.config.vocab_size != 0 && run.config.vocab_size != V) {
      throw ConfigError(run.label + ": student vocabulary does not match the teacher");
    }
    if (run.config.context_len != T || T > teacher.config.context_len) {
      throw ConfigError(run.label + ": context lengths of students and teacher must agree");
    }
    if (run.init) {
      ModelConfig cfg = run.config;
      cfg.vocab_size = V;
      if (run.init->size() != parameter_count(cfg)) {
        throw ConfigError(run.label + ": initial parameters do not fit the student config");
      }
    }
    if (run.tokens != TokenSet::Full) {
      if (!(run.token_k >= 0.0 && run.token_k <= 1.0)) {
        throw ConfigError(run.label + ": token_k must lie in [0, 1]");
      }
      needs_unc = true;
    }
  }

  const auto t0 = Clock::now();
  const TinyLM teacher_model = teacher.model();
  std::vector<TinyLM> students;
  std::vector<AdamState> adam(runs.size());
  std::vector<Tracker> trackers(runs.size());
  std::vector<TrainResult> out(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    ModelConfig cfg = runs[i].config;
    cfg.vocab_size = V;
    students.push_back(runs[i].init ? TinyLM(cfg, *runs[i].init) : TinyLM(cfg));
    out[i].initial = make_checkpoint(students.back(), 0, corpus.hash);
    RunRecord& rec = out[i].record;
    rec.experiment = "distill";
    rec.label = runs[i].label;
    rec.seed = cfg.seed;
    rec.config = {{"student", model_to_json(cfg)},
                  {"teacher", model_to_json(teacher.config)},
                  {"teacher_hash", to_hex(checkpoint_digest(teacher))},
                  {"objective", objective_to_json(runs[i].objective)},
                  {"tokens", std::string(to_string(runs[i].tokens))},
                  {"token_k", runs[i].token_k},
                  {"train", train_echo(opts)},
                  {"data_seed", data_seed}};
  }

  BatchSampler sampler(corpus.train, B, T, data_seed);
  const auto val = eval_tokens(corpus, opts);
  const std::vector<std::uint8_t> all(N, 1);
  for (std::uint64_t step = 0; step < opts.steps; ++step) {
    const TokenBatch b = sampler.next();
    const auto zt = forward(teacher_model, b.inputs, B, T, opts.precision);
    require_finite(zt, "teacher", step + 1);
    std::vector<double> unc;
    if (needs_unc) unc = teacher_unc(LogitBatch(N, V, zt, zt, b.targets, all));

    for (std::size_t i = 0; i < runs.size(); ++i) {
      const StudentRun& run = runs[i];
      auto mask = run.tokens == TokenSet::Full ? all : token_set_mask(unc, run.tokens, run.token_k);
      const bool empty = std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; });
      if (!empty) {
        ForwardState state;
        auto zs = forward(students[i], b.inputs, B, T, opts.precision, &state);
        require_finite(zs, run.label, step + 1);
        const LogitBatch batch(N, V, zt, std::move(zs), b.targets, std::move(mask));
        LossGrad lg = loss_grad(batch, run.objective);
        double loss = lg.loss;
        if (opts.ce_mix > 0.0) {
          loss += opts.ce_mix *
                  cross_entropy(batch.student(), b.targets, batch.mask(), V, opts.ce_mix, lg.grad);
        }
        if (!std::isfinite(loss)) {
          throw TrainingDivergence(
              fmt::format("{}: non-finite loss at step {}", run.label, step + 1),
              static_cast<std::int64_t>(step + 1));
        }
        adam_step(students[i], adam[i], backward(students[i], state, lg.grad),
                  opts.learning_rate(step));
        out[i].losses.push_back(loss);
        trackers[i].add(loss);
      } else {
        // Nothing to learn from this batch; the optimizer state is left alone.
        out[i].losses.push_back(0.0);
      }
      if (eval_due(step + 1, opts)) {
        const double ppl = perplexity(students[i], val);
        check_perplexity(ppl, run.label, step + 1);
        out[i].record.evals.push_back(trackers[i].close(step + 1, ppl));
        if (log) log(fmt::format("{} step {} loss {:.5f} val_ppl {:.4f}", run.label, step + 1,
                                 out[i].record.evals.back().train_loss, ppl));
      }
    }
  }
  const double wall = seconds_since(t0);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out[i].checkpoint = make_checkpoint(students[i], opts.steps, corpus.hash);
    out[i].record.final_ppl = out[i].record.evals.back().val_ppl;
    out[i].record.wall_time_s = wall;
  }
  return out;
}

TrainResult distill(const Corpus& corpus, const Checkpoint& teacher, const StudentRun& run,
                    const TrainOptions& opts, std::uint64_t data_seed, const Logger& log) {
  return std::move(distill_group(corpus, teacher, {run}, opts, data_seed, log).front());
}

UncSample unc_sample(const Corpus& corpus, std::size_t tokens, std::size_t seq_len,
                     std::uint64_t seed) {
  if (tokens == 0 || seq_len == 0) throw InvalidInput("UnC sample needs tokens and seq_len");
  const std::size_t windows = (tokens + seq_len - 1) / seq_len;
  BatchSampler sampler(corpus.train, windows, seq_len, seed);
  TokenBatch b = sampler.next();
  return {std::move(b.inputs), std::move(b.targets), windows, seq_len};
}

std::vector<double> sample_unc(const TinyLM& teacher, const UncSample& s) {
  constexpr std::size_t kChunk = 16;
  const std::size_t V = teacher.config().vocab_size;
  std::vector<double> out;
  out.reserve(s.inputs.size());
  for (std::size_t w = 0; w < s.windows; w += kChunk) {
    const std::size_t nw = std::min(kChunk, s.windows - w);
    const std::size_t n = nw * s.seq_len, off = w * s.seq_len;
    const std::span<const std::uint32_t> in(s.inputs.data() + off, n);
    const auto z = forward(teacher, in, nw, s.seq_len);
    std::vector<std::uint32_t> tg(s.targets.begin() + off, s.targets.begin() + off + n);
    const auto u = teacher_unc(LogitBatch(n, V, z, z, std::move(tg), std::vector<std::uint8_t>(n, 1)));
    out.insert(out.end(), u.begin(), u.end());
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<LandscapePoint> landscape(const Checkpoint& theta0, const Checkpoint& theta1,
                                      std::span<const std::uint32_t> tokens, std::size_t points) {
  ModelConfig a = theta0.config, b = theta1.config;
  a.seed = b.seed = 0;
  if (!(a == b)) throw ConfigError("landscape endpoints have different model configs");
  if (points < 3 || points % 2 == 0) {
    throw ConfigError("landscape needs an odd number of points, at least 3");
  }
  const double half = double(points - 1) / 2.0;
  std::vector<LandscapePoint> curve;
  for (std::size_t i = 0; i < points; ++i) {
    const double beta = (double(i) - half) / half;
    const TinyLM m(theta1.config, interpolate(theta0.params, theta1.params, beta));
    curve.push_back({beta, perplexity(m, tokens)});
  }
  return curve;
}

void write_landscape(const std::vector<LandscapePoint>& curve, const std::filesystem::path& path) {
  CsvWriter csv({"beta", "perplexity"});
  for (const auto& p : curve) csv.row({format_double(p.beta), format_double(p.perplexity)});
  csv.save(path);
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace atkd
