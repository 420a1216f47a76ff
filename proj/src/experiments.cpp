// SPDX-License-Identifier: Apache-2.0
#include <fmt/format.h>

#include <filesystem>
#include <map>
#include <mutex>

#include "atkd/csv.hpp"
#include "atkd/error.hpp"
#include "atkd/harness.hpp"
#include "atkd/kde.hpp"

namespace atkd {

namespace fs = std::filesystem;

namespace {

struct Env {
  const ExperimentSpec& spec;
  const RunContext& ctx;
  Corpus corpus;
  std::mutex mu;
  ExperimentOutput out;

  void log(const std::string& msg) {
    if (!ctx.log) return;
    std::lock_guard lock(mu);
    ctx.log(msg);
  }
  Logger logger() {
    return [this](const std::string& m) { log(m); };
  }
  fs::path file(const std::string& name) {
    std::lock_guard lock(mu);
    const fs::path p = ctx.out_dir / name;
    out.files.push_back(p);
    return p;
  }
};

ModelConfig with_seed(ModelConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

std::string ladder_label(const ModelConfig& c) {
  return fmt::format("d{}_l{}", c.d_model, c.n_layers);
}

// Teachers for one seed: loaded from ctx.teachers when given, else trained.
std::vector<Checkpoint> teachers_for(Env& env, std::uint64_t seed,
                                     const std::vector<ModelConfig>& configs) {
  std::vector<Checkpoint> out;
  if (!env.ctx.teachers.empty()) {
    for (const auto& path : env.ctx.teachers) out.push_back(load_checkpoint(path));
    return out;
  }
  for (const auto& cfg : configs) {
    const std::string label = fmt::format("teacher_{}_seed{}", ladder_label(cfg), seed);
    env.log("training " + label);
    TrainResult r = train_teacher(env.corpus, with_seed(cfg, derive_seed(seed, kTeacherInit)),
                                  env.spec.teacher_train, derive_seed(seed, kTeacherData), label,
                                  env.logger());
    save_checkpoint(env.file(label + ".ckpt"), r.checkpoint);
    r.record.seed = seed;
    {
      std::lock_guard lock(env.mu);
      env.out.records.push_back(r.record);
    }
    out.push_back(std::move(r.checkpoint));
  }
  return out;
}

StudentRun student_run(const ExperimentSpec& spec, std::uint64_t seed, std::string label,
                       ObjectiveConfig obj, TokenSet tokens = TokenSet::Full) {
  StudentRun r;
  r.label = std::move(label);
  r.config = with_seed(spec.student, derive_seed(seed, kStudentInit));
  r.objective = obj;
  r.tokens = tokens;
  r.token_k = spec.objective.k_ratio;
  return r;
}

std::vector<TrainResult> run_students(Env& env, std::uint64_t seed, const Checkpoint& teacher,
                                      const std::vector<StudentRun>& runs,
                                      const std::string& experiment) {
  auto results = distill_group(env.corpus, teacher, runs, env.spec.student_train,
                               derive_seed(seed, kStudentData), env.logger());
  std::lock_guard lock(env.mu);
  for (auto& r : results) {
    r.record.experiment = experiment;
    r.record.seed = seed;
    env.out.records.push_back(r.record);
  }
  return results;
}

// Runs fn(seed) for every seed; results are merged in seed order.
template <class Fn>
void for_seeds(Env& env, Fn fn) {
  parallel_for(env.spec.seeds.size(), env.ctx.jobs, [&](std::size_t i) { fn(env.spec.seeds[i]); });
}

void run_distill(Env& env) {
  for_seeds(env, [&](std::uint64_t seed) {
    const auto teachers = teachers_for(env, seed, {env.spec.teacher});
    const std::string label = fmt::format("{}_seed{}", to_string(env.spec.objective.mode), seed);
    auto r = run_students(env, seed, teachers.front(),
                          {student_run(env.spec, seed, label, env.spec.objective)}, "distill");
    save_checkpoint(env.file("student_init_seed" + std::to_string(seed) + ".ckpt"),
                    r.front().initial);
    save_checkpoint(env.file("student_seed" + std::to_string(seed) + ".ckpt"),
                    r.front().checkpoint);
  });
}

void run_token_split(Env& env) {
  std::map<std::uint64_t, std::vector<double>> finals;
  for_seeds(env, [&](std::uint64_t seed) {
    const auto teachers = teachers_for(env, seed, {env.spec.teacher});
    const ObjectiveConfig fkl{Mode::ForwardKL};
    std::vector<StudentRun> runs;
    for (TokenSet s : {TokenSet::Hard, TokenSet::Easy, TokenSet::Full}) {
      runs.push_back(student_run(env.spec, seed, fmt::format("fkl_{}_seed{}", to_string(s), seed),
                                 fkl, s));
    }
    const auto r = run_students(env, seed, teachers.front(), runs, "token_split");
    std::lock_guard lock(env.mu);
    for (const auto& x : r) finals[seed].push_back(x.record.final_ppl);
  });
  CsvWriter csv({"seed", "tokens", "final_ppl"});
  for (const auto& [seed, v] : finals) {
    const TokenSet sets[] = {TokenSet::Hard, TokenSet::Easy, TokenSet::Full};
    for (std::size_t i = 0; i < 3; ++i)
      csv.row({std::to_string(seed), std::string(to_string(sets[i])), format_double(v[i])});
  }
  csv.save(env.file("token_split.csv"));
}

void run_ablation(Env& env) {
  const Mode modes[] = {Mode::TkdOnly, Mode::DkdOnly, Mode::TkdPlusDkd};
  const TokenSet sets[] = {TokenSet::Full, TokenSet::Easy, TokenSet::Hard};
  std::map<std::uint64_t, std::vector<double>> finals;
  for_seeds(env, [&](std::uint64_t seed) {
    const auto teachers = teachers_for(env, seed, {env.spec.teacher});
    std::vector<StudentRun> runs;
    for (Mode m : modes)
      for (TokenSet s : sets)
        runs.push_back(student_run(env.spec, seed,
                                   fmt::format("{}_{}_seed{}", to_string(m), to_string(s), seed),
                                   ObjectiveConfig{m}, s));
    const auto r = run_students(env, seed, teachers.front(), runs, "ablation");
    std::lock_guard lock(env.mu);
    for (const auto& x : r) finals[seed].push_back(x.record.final_ppl);
  });
  CsvWriter lng({"seed", "objective", "tokens", "final_ppl"});
  std::vector<double> mean(9, 0.0);
  for (const auto& [seed, v] : finals) {
    for (std::size_t i = 0; i < 9; ++i) {
      lng.row({std::to_string(seed), std::string(to_string(modes[i / 3])),
               std::string(to_string(sets[i % 3])), format_double(v[i])});
      mean[i] += v[i] / double(finals.size());
    }
  }
  lng.save(env.file("ablation.csv"));
  CsvWriter table({"objective", "full", "easy_only", "hard_only"});
  table.comment(fmt::format(" mean final validation perplexity over {} seed(s)", finals.size()));
  for (std::size_t m = 0; m < 3; ++m) {
    table.row({std::string(to_string(modes[m])), format_double(mean[m * 3]),
               format_double(mean[m * 3 + 1]), format_double(mean[m * 3 + 2])});
  }
  table.save(env.file("ablation_table.csv"));
}

void run_sweep(Env& env) {
  const ExperimentSpec& spec = env.spec;
  const std::string param = spec.sweep ? spec.sweep->parameter
                            : spec.experiment == Experiment::AlphaSweep  ? "alpha"
                            : spec.experiment == Experiment::KSweep      ? "k_ratio"
                            : spec.experiment == Experiment::LambdaSweep ? "lambda"
                                                                         : "teacher_size";
  const std::vector<double> values =
      spec.sweep ? spec.sweep->values : default_sweep_values(param, spec.teacher_ladder.size());
  std::map<std::uint64_t, std::vector<double>> finals;
  for_seeds(env, [&](std::uint64_t seed) {
    std::vector<double> f(values.size());
    if (param == "teacher_size") {
      std::vector<ModelConfig> ladder;
      for (double v : values) ladder.push_back(spec.teacher_ladder[static_cast<std::size_t>(v)]);
      const auto teachers = teachers_for(env, seed, ladder);
      if (teachers.size() != values.size()) {
        throw ConfigError("teacher_size sweep needs one teacher checkpoint per value");
      }
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto label = fmt::format("teacher_{}_seed{}", ladder_label(teachers[i].config), seed);
        f[i] = run_students(env, seed, teachers[i],
                            {student_run(spec, seed, "student_of_" + label, spec.objective)},
                            "sweep")
                   .front()
                   .record.final_ppl;
      }
    } else {
      const auto teachers = teachers_for(env, seed, {spec.teacher});
      std::vector<StudentRun> runs;
      for (double v : values) {
        ObjectiveConfig obj = spec.objective;
        if (param == "alpha") {
          obj.mode = Mode::AlphaTkdDkd;
          obj.alpha = v;
        } else {
          if (obj.mode != Mode::ReverseATKD) obj.mode = Mode::ATKD;
          (param == "k_ratio" ? obj.k_ratio : obj.lambda) = v;
        }
        runs.push_back(student_run(spec, seed,
                                   fmt::format("{}={}_seed{}", param, format_double(v), seed), obj));
      }
      const auto r = run_students(env, seed, teachers.front(), runs, "sweep");
      for (std::size_t i = 0; i < r.size(); ++i) f[i] = r[i].record.final_ppl;
    }
    std::lock_guard lock(env.mu);
    finals[seed] = f;
  });
  CsvWriter csv({"param", "value", "seed", "final_ppl"});
  for (std::size_t i = 0; i < values.size(); ++i)
    for (const auto& [seed, f] : finals)
      csv.row({param, format_double(values[i]), std::to_string(seed), format_double(f[i])});
  csv.save(env.file("sweep_" + param + ".csv"));
}

void run_unc_dist(Env& env) {
  struct Row {
    std::string label;
    ModelConfig config;
    std::size_t params;
    std::size_t samples;
    double median, mean;
  };
  std::map<std::uint64_t, std::vector<Row>> rows;
  for_seeds(env, [&](std::uint64_t seed) {
    const auto teachers = teachers_for(env, seed, env.spec.teacher_ladder);
    if (teachers.size() < 2) throw ConfigError("unc-dist needs at least 2 teachers");
    std::vector<Row> r;
    for (std::size_t i = 0; i < teachers.size(); ++i) {
      const Checkpoint& t = teachers[i];
      const TinyLM model = t.model();
      const UncSample sample = unc_sample(env.corpus, env.spec.unc_sample_tokens,
                                          t.config.context_len, env.spec.unc_sample_seed);
      const auto unc = sample_unc(model, sample);
      // Ladder position first so equal configs still get separate files.
      const std::string label = fmt::format("t{}_{}", i, ladder_label(t.config));
      kde_emit(unc, env.spec.kde_grid, env.file(fmt::format("kde_{}_seed{}.csv", label, seed)));
      double sum = 0.0;
      for (double u : unc) sum += u;
      r.push_back({label, t.config, model.size(), unc.size(), median(unc), sum / double(unc.size())});
    }
    std::lock_guard lock(env.mu);
    rows[seed] = std::move(r);
  });
  CsvWriter csv({"seed", "teacher", "d_model", "n_layers", "params", "samples", "median_unc",
                 "mean_unc"});
  for (const auto& [seed, r] : rows)
    for (const auto& x : r)
      csv.row({std::to_string(seed), x.label, std::to_string(x.config.d_model),
               std::to_string(x.config.n_layers), std::to_string(x.params),
               std::to_string(x.samples), format_double(x.median), format_double(x.mean)});
  csv.save(env.file("unc_summary.csv"));
}

void run_landscape(Env& env) {
  const auto tokens = eval_tokens(env.corpus, env.spec.student_train);
  if (env.ctx.theta0 || env.ctx.theta1) {
    if (!env.ctx.theta0 || !env.ctx.theta1) throw ConfigError("landscape needs both theta0 and theta1");
    const auto curve = landscape(load_checkpoint(*env.ctx.theta0), load_checkpoint(*env.ctx.theta1),
                                 tokens);
    write_landscape(curve, env.file("landscape.csv"));
    return;
  }
  for_seeds(env, [&](std::uint64_t seed) {
    const auto teachers = teachers_for(env, seed, {env.spec.teacher});
    const std::vector<StudentRun> runs{
        student_run(env.spec, seed, fmt::format("atkd_seed{}", seed), env.spec.objective),
        student_run(env.spec, seed, fmt::format("forward_kl_seed{}", seed),
                    ObjectiveConfig{Mode::ForwardKL})};
    const auto r = run_students(env, seed, teachers.front(), runs, "landscape");
    for (const auto& x : r) {
      write_landscape(landscape(x.initial, x.checkpoint, tokens),
                      env.file("landscape_" + x.record.label + ".csv"));
    }
  });
}

}  // namespace

ExperimentOutput run_experiment(const ExperimentSpec& spec, const RunContext& ctx) {
  spec.validate();
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + ctx.out_dir.string() + ": " + ec.message());
  Env env{spec, ctx, load_corpus(spec.corpus_path, spec.train_fraction), {}, {}};
  switch (spec.experiment) {
    case Experiment::Distill: run_distill(env); break;
    case Experiment::TokenSplit: run_token_split(env); break;
    case Experiment::ObjectiveAblation: run_ablation(env); break;
    case Experiment::AlphaSweep:
    case Experiment::KSweep:
    case Experiment::LambdaSweep:
    case Experiment::TeacherSweep: run_sweep(env); break;
    case Experiment::UncDist: run_unc_dist(env); break;
    case Experiment::Landscape: run_landscape(env); break;
  }
  // Records arrive in completion order when jobs > 1; fix the order.
  std::stable_sort(env.out.records.begin(), env.out.records.end(),
                   [](const RunRecord& a, const RunRecord& b) {
                     return std::tie(a.seed, a.experiment, a.label) <
                            std::tie(b.seed, b.experiment, b.label);
                   });
  std::sort(env.out.files.begin(), env.out.files.end());
  const fs::path jsonl = ctx.out_dir / "runs.jsonl";
  write_jsonl(jsonl, env.out.records);
  env.out.files.push_back(jsonl);
  return std::move(env.out);
}

}  // namespace atkd
