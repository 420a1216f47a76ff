// SPDX-License-Identifier: Apache-2.0
// Command-line front end: teacher training, distillation experiments,
// logit-file decomposition and gradient checks.

#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "CLI11.hpp"
#include "atkd/checkpoint.hpp"
#include "atkd/decomposition.hpp"
#include "atkd/error.hpp"
#include "atkd/experiment.hpp"
#include "atkd/grad.hpp"
#include "atkd/harness.hpp"
#include "atkd/logit_io.hpp"

namespace {

using namespace atkd;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kDivergence = 3, kIo = 4 };

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "out";
  unsigned jobs = 1;
  std::optional<double> ce_mix;
  std::optional<std::uint64_t> steps;
  std::optional<std::uint64_t> teacher_steps;
  std::vector<std::string> teachers;
  std::string corpus;
};

void add_common(CLI::App* app, Common& c, bool with_teacher = true) {
  app->add_option("--config", c.config, "JSON experiment config");
  app->add_option("--seed", c.seeds, "Run seed(s); replaces the config's seed list");
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Concurrent runs")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--ce-mix", c.ce_mix, "Weight of ground-truth cross-entropy added to the KD loss");
  app->add_option("--steps", c.steps, "Student training steps");
  app->add_option("--teacher-steps", c.teacher_steps, "Teacher training steps");
  app->add_option("--corpus", c.corpus, "Corpus file; replaces the config's corpus");
  if (with_teacher) app->add_option("--teacher", c.teachers, "Pre-trained teacher checkpoint(s)");
}

ExperimentSpec make_spec(const Common& c, Experiment kind) {
  ExperimentSpec s = c.config.empty() ? ExperimentSpec{} : load_spec(c.config);
  s.experiment = kind;
  if (!c.seeds.empty()) s.seeds = c.seeds;
  if (c.ce_mix) s.student_train.ce_mix = *c.ce_mix;
  if (c.steps) s.student_train.steps = *c.steps;
  if (c.teacher_steps) s.teacher_train.steps = *c.teacher_steps;
  if (!c.corpus.empty()) s.corpus_path = c.corpus;
  return s;
}

const auto kStart = std::chrono::steady_clock::now();

void log_line(const std::string& msg) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - kStart).count();
  fmt::print(stderr, "[{:8.1f}s] {}\n", t, msg);
}

int run(const ExperimentSpec& spec, const Common& c, const RunContext& base = {}) {
  RunContext ctx = base;
  ctx.out_dir = c.out_dir;
  ctx.jobs = c.jobs;
  for (const auto& t : c.teachers) ctx.teachers.emplace_back(t);
  ctx.log = log_line;
  const ExperimentOutput out = run_experiment(spec, ctx);
  for (const auto& r : out.records)
    fmt::print("{:<40} seed {:<4} final_ppl {:.6f}\n", r.label, r.seed, r.final_ppl);
  for (const auto& f : out.files) fmt::print("wrote {}\n", f.string());
  return kOk;
}

int train_teachers(const Common& c, bool ladder) {
  const ExperimentSpec spec = make_spec(c, Experiment::Distill);
  const Corpus corpus = load_corpus(spec.corpus_path, spec.train_fraction);
  std::filesystem::create_directories(c.out_dir);
  const std::vector<ModelConfig> configs = ladder ? spec.teacher_ladder
                                                  : std::vector<ModelConfig>{spec.teacher};
  std::vector<RunRecord> records(spec.seeds.size() * configs.size());
  parallel_for(records.size(), c.jobs, [&](std::size_t i) {
    const std::uint64_t seed = spec.seeds[i / configs.size()];
    ModelConfig cfg = configs[i % configs.size()];
    cfg.seed = derive_seed(seed, kTeacherInit);
    const std::string label =
        ladder ? fmt::format("teacher_d{}_l{}_seed{}", cfg.d_model, cfg.n_layers, seed)
               : fmt::format("teacher_seed{}", seed);
    TrainResult r = train_teacher(corpus, cfg, spec.teacher_train, derive_seed(seed, kTeacherData),
                                  label, log_line);
    save_checkpoint(std::filesystem::path(c.out_dir) / (label + ".ckpt"), r.checkpoint);
    r.record.seed = seed;
    records[i] = r.record;
    fmt::print("{:<40} val_ppl {:.6f}\n", label, r.record.final_ppl);
  });
  write_jsonl(std::filesystem::path(c.out_dir) / "runs.jsonl", records);
  return kOk;
}

int decompose(const std::string& input, const std::string& output, double k) {
  const LogitFile f = read_logit_file(input);
  if (!f.has_student()) throw InvalidInput(input + " has no student logits to compare against");
  const LogitBatch batch = f.batch();
  const TokenDecomposition d = batch_decompose(batch);
  write_report(d, rank_and_split(d.unc, d.mask, k), output);
  if (batch.active_count() > 0) {
    fmt::print("tokens {} active {} mean unc {:.6f} tkd {:.6f} dkd {:.6f} kl {:.6f}\n",
               batch.tokens(), batch.active_count(), masked_mean(d.unc, d.mask),
               masked_mean(d.tkd, d.mask), masked_mean(d.dkd, d.mask),
               masked_mean(d.kl_total, d.mask));
  }
  fmt::print("wrote {}\n", output);
  return kOk;
}

LogitBatch random_batch(std::uint64_t seed, std::size_t tokens, std::size_t classes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::vector<double> t(tokens * classes), s(tokens * classes);
  for (double& v : t) v = normal(rng);
  for (double& v : s) v = normal(rng);
  std::vector<std::uint32_t> targets(tokens);
  for (auto& x : targets) x = static_cast<std::uint32_t>(rng() % classes);
  return LogitBatch(tokens, classes, std::move(t), std::move(s), std::move(targets),
                    std::vector<std::uint8_t>(tokens, 1));
}

int check_grads(std::vector<std::uint64_t> seeds, std::size_t tokens, std::size_t classes,
                double eps, double tol, const ObjectiveConfig& base) {
  if (seeds.empty()) seeds = {0, 1, 2};
  bool ok = true;
  fmt::print("{:<16} {:>6} {:>14}\n", "mode", "seed", "max_rel_err");
  for (Mode m : {Mode::ForwardKL, Mode::ReverseKL, Mode::TkdOnly, Mode::DkdOnly, Mode::TkdPlusDkd,
                 Mode::AlphaTkdDkd, Mode::ATKD, Mode::ReverseATKD}) {
    ObjectiveConfig cfg = base;
    cfg.mode = m;
    for (std::uint64_t seed : seeds) {
      const double err = fd_check(random_batch(seed, tokens, classes), cfg, eps);
      ok = ok && err <= tol;
      fmt::print("{:<16} {:>6} {:>14.3e}{}\n", to_string(m), seed, err, err <= tol ? "" : "  FAIL");
    }
  }
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  atkd::tune_allocator();
  CLI::App app{"Token-adaptive knowledge distillation toolkit"};
  app.require_subcommand(1);
  Common c;

  auto* tt = app.add_subcommand("train-teacher", "Train teacher model(s) with cross-entropy");
  add_common(tt, c, false);
  bool ladder = false;
  tt->add_flag("--ladder", ladder, "Train every teacher of the size ladder");

  auto* di = app.add_subcommand("distill", "Distill a student with the configured objective");
  add_common(di, c);
  auto* ts = app.add_subcommand("token-split", "Forward-KL students on hard, easy and all tokens");
  add_common(ts, c);
  auto* ab = app.add_subcommand("ablation", "TKD/DKD/TKD+DKD crossed with full/easy/hard tokens");
  add_common(ab, c);

  auto* sw = app.add_subcommand("sweep", "Sweep k_ratio, lambda, alpha or teacher_size");
  add_common(sw, c);
  std::string param;
  std::vector<double> values;
  sw->add_option("--param", param, "Swept parameter")
      ->check(CLI::IsMember({"k_ratio", "lambda", "alpha", "teacher_size"}));
  sw->add_option("--values", values, "Grid values (default grid when omitted)");

  auto* ud = app.add_subcommand("unc-dist", "Teacher UnC distributions across the size ladder");
  add_common(ud, c);

  auto* ls = app.add_subcommand("landscape", "Perplexity along theta1 + beta (theta1 - theta0)");
  add_common(ls, c);
  std::string theta0, theta1;
  ls->add_option("--theta0", theta0, "Checkpoint before distillation");
  ls->add_option("--theta1", theta1, "Checkpoint after distillation");

  auto* dc = app.add_subcommand("decompose", "Per-token decomposition report for a logit file");
  std::string input, output = "report.csv";
  double k = 0.5;
  dc->add_option("input", input, "Logit file")->required();
  dc->add_option("-o,--output", output, "Report CSV")->capture_default_str();
  dc->add_option("--k", k, "Hard-token ratio")->capture_default_str()->check(CLI::Range(0.0, 1.0));

  auto* cg = app.add_subcommand("check-grads", "Finite-difference check of every objective");
  std::vector<std::uint64_t> cg_seeds;
  std::size_t cg_tokens = 6, cg_classes = 8;
  double cg_eps = 1e-5, cg_tol = 1e-4;
  ObjectiveConfig cg_obj{Mode::ATKD, 0.5, 0.2, 0.6};
  cg->add_option("--seed", cg_seeds, "Seeds (default 0 1 2)");
  cg->add_option("--tokens", cg_tokens, "Tokens per random batch")->capture_default_str();
  cg->add_option("--classes", cg_classes, "Classes per token")->capture_default_str();
  cg->add_option("--eps", cg_eps, "Central-difference step")->capture_default_str();
  cg->add_option("--tol", cg_tol, "Maximum relative error")->capture_default_str();
  cg->add_option("--k", cg_obj.k_ratio, "ATKD hard-token ratio")->capture_default_str();
  cg->add_option("--lambda", cg_obj.lambda, "ATKD easy-token weight")->capture_default_str();
  cg->add_option("--alpha", cg_obj.alpha, "TKD weight of alpha_tkd_dkd")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (tt->parsed()) return train_teachers(c, ladder);
    if (di->parsed()) return run(make_spec(c, Experiment::Distill), c);
    if (ts->parsed()) return run(make_spec(c, Experiment::TokenSplit), c);
    if (ab->parsed()) return run(make_spec(c, Experiment::ObjectiveAblation), c);
    if (ud->parsed()) return run(make_spec(c, Experiment::UncDist), c);
    if (sw->parsed()) {
      ExperimentSpec base = c.config.empty() ? ExperimentSpec{} : load_spec(c.config);
      if (param.empty()) param = base.sweep ? base.sweep->parameter : "k_ratio";
      const Experiment kind = param == "alpha"    ? Experiment::AlphaSweep
                              : param == "lambda" ? Experiment::LambdaSweep
                              : param == "k_ratio" ? Experiment::KSweep
                                                   : Experiment::TeacherSweep;
      ExperimentSpec spec = make_spec(c, kind);
      if (!values.empty()) spec.sweep = SweepSpec{param, values};
      else if (!spec.sweep || spec.sweep->parameter != param)
        spec.sweep = SweepSpec{param, default_sweep_values(param, spec.teacher_ladder.size())};
      return run(spec, c);
    }
    if (ls->parsed()) {
      RunContext ctx;
      if (!theta0.empty()) ctx.theta0 = theta0;
      if (!theta1.empty()) ctx.theta1 = theta1;
      return run(make_spec(c, Experiment::Landscape), c, ctx);
    }
    if (dc->parsed()) return decompose(input, output, k);
    if (cg->parsed()) return check_grads(cg_seeds, cg_tokens, cg_classes, cg_eps, cg_tol, cg_obj);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfig;
  } catch (const InvalidInput& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return kConfig;
  } catch (const TrainingDivergence& e) {
    fmt::print(stderr, "training diverged at step {}: {}\n", e.step(), e.what());
    return kDivergence;
  } catch (const TrainingFailure& e) {
    fmt::print(stderr, "training failed: {}\n", e.what());
    return kDivergence;
  } catch (const ParseError& e) {
    fmt::print(stderr, "parse error: {}\n", e.what());
    return kIo;
  } catch (const IoError& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFailure;
  }
  return kOk;
}
