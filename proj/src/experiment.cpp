// SPDX-License-Identifier: Apache-2.0
#include "atkd/experiment.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "atkd/error.hpp"

namespace atkd {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Experiment, std::string_view>, 9> kExperimentNames{{
    {Experiment::Distill, "distill"},
    {Experiment::TokenSplit, "token_split"},
    {Experiment::ObjectiveAblation, "ablation"},
    {Experiment::AlphaSweep, "alpha_sweep"},
    {Experiment::KSweep, "k_sweep"},
    {Experiment::LambdaSweep, "lambda_sweep"},
    {Experiment::TeacherSweep, "teacher_sweep"},
    {Experiment::UncDist, "unc_dist"},
    {Experiment::Landscape, "landscape"},
}};

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string_view> allowed(keys);
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

ModelConfig model_from_json(const json& j, ModelConfig base, const std::string& where) {
  reject_unknown(j, {"d_model", "n_layers", "n_heads", "context_len"}, where);
  read(j, "d_model", base.d_model, where);
  read(j, "n_layers", base.n_layers, where);
  read(j, "n_heads", base.n_heads, where);
  read(j, "context_len", base.context_len, where);
  return base;
}

TrainOptions train_from_json(const json& j, TrainOptions base, const std::string& where) {
  reject_unknown(j,
                 {"steps", "batch_size", "lr", "warmup", "eval_interval", "eval_tokens",
                  "precision", "ce_mix"},
                 where);
  read(j, "steps", base.steps, where);
  read(j, "batch_size", base.batch_size, where);
  read(j, "lr", base.lr, where);
  read(j, "warmup", base.warmup, where);
  read(j, "eval_interval", base.eval_interval, where);
  read(j, "eval_tokens", base.eval_tokens, where);
  read(j, "ce_mix", base.ce_mix, where);
  if (j.contains("precision")) {
    std::string p;
    read(j, "precision", p, where);
    if (p == "float32") base.precision = Precision::Float32;
    else if (p == "float64") base.precision = Precision::Float64;
    else throw ConfigError(where + ".precision must be float32 or float64, got '" + p + "'");
  }
  return base;
}

json train_to_json(const TrainOptions& t) {
  return {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"warmup", t.warmup},
          {"eval_interval", t.eval_interval},
          {"eval_tokens", t.eval_tokens},
          {"precision", t.precision == Precision::Float32 ? "float32" : "float64"},
          {"ce_mix", t.ce_mix}};
}

void validate_model(const ModelConfig& c, const std::string& where) {
  ModelConfig probe = c;
  probe.vocab_size = 2;  // real value comes from the corpus
  try {
    probe.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Experiment e) noexcept {
  for (const auto& [k, name] : kExperimentNames)
    if (k == e) return name;
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  for (const auto& [k, n] : kExperimentNames)
    if (n == name) return k;
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::vector<double> default_sweep_values(std::string_view parameter, std::size_t ladder_size) {
  std::vector<double> v;
  if (parameter == "k_ratio" || parameter == "lambda") {
    for (int i = 0; i <= 10; ++i) v.push_back(i / 10.0);
  } else if (parameter == "alpha") {
    for (int i = 0; i <= 4; ++i) v.push_back(i / 4.0);
  } else if (parameter == "teacher_size") {
    for (std::size_t i = 0; i < ladder_size; ++i) v.push_back(double(i));
  } else {
    throw ConfigError("unknown sweep parameter '" + std::string(parameter) + "'");
  }
  return v;
}

double TrainOptions::learning_rate(std::uint64_t step) const {
  if (step < warmup) return lr * double(step + 1) / double(warmup);
  return lr;
}

void TrainOptions::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (eval_interval < 1) throw ConfigError("eval_interval must be at least 1");
  if (!(ce_mix >= 0.0) || !std::isfinite(ce_mix)) throw ConfigError("ce_mix must be >= 0");
}

void ExperimentSpec::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus path is empty");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  validate_model(teacher, "teacher");
  validate_model(student, "student");
  for (std::size_t i = 0; i < teacher_ladder.size(); ++i)
    validate_model(teacher_ladder[i], "teacher_ladder[" + std::to_string(i) + "]");
  objective.validate();
  student_train.validate();
  teacher_train.validate();
  if (kde_grid < 16) throw ConfigError("kde_grid must be at least 16");
  if (unc_sample_tokens < 2) throw ConfigError("unc_sample_tokens must be at least 2");

  const bool is_sweep = experiment == Experiment::AlphaSweep || experiment == Experiment::KSweep ||
                        experiment == Experiment::LambdaSweep ||
                        experiment == Experiment::TeacherSweep;
  if (sweep && !is_sweep) {
    throw ConfigError("a sweep block is only valid for sweep experiments, not " +
                      std::string(to_string(experiment)));
  }
  if (sweep) {
    const char* expect = experiment == Experiment::AlphaSweep    ? "alpha"
                         : experiment == Experiment::KSweep      ? "k_ratio"
                         : experiment == Experiment::LambdaSweep ? "lambda"
                                                                 : "teacher_size";
    if (sweep->parameter != expect) {
      throw ConfigError("experiment " + std::string(to_string(experiment)) + " sweeps " + expect +
                        ", not " + sweep->parameter);
    }
    if (sweep->values.empty()) throw ConfigError("sweep has no values");
    for (double v : sweep->values) {
      if (!std::isfinite(v)) throw ConfigError("sweep value is not finite");
      if (sweep->parameter == "teacher_size") {
        if (v < 0 || v != std::floor(v) || v >= double(teacher_ladder.size())) {
          throw ConfigError("teacher_size values index the teacher ladder");
        }
      } else if (v < 0.0 || v > 1.0) {
        throw ConfigError(sweep->parameter + " values must lie in [0, 1]");
      }
    }
  }
  if ((experiment == Experiment::UncDist || experiment == Experiment::TeacherSweep) &&
      teacher_ladder.size() < 2) {
    throw ConfigError("this experiment needs at least 2 teacher_ladder entries");
  }
}

ExperimentSpec spec_from_json(const json& j) {
  reject_unknown(j,
                 {"experiment", "corpus", "train_fraction", "seeds", "teacher", "student",
                  "teacher_ladder", "objective", "student_train", "teacher_train", "sweep",
                  "unc_sample_tokens", "unc_sample_seed", "kde_grid"},
                 "config");
  ExperimentSpec s;
  if (j.contains("experiment")) {
    std::string name;
    read(j, "experiment", name, "config");
    s.experiment = parse_experiment(name);
  }
  read(j, "corpus", s.corpus_path, "config");
  read(j, "train_fraction", s.train_fraction, "config");
  read(j, "seeds", s.seeds, "config");
  read(j, "unc_sample_tokens", s.unc_sample_tokens, "config");
  read(j, "unc_sample_seed", s.unc_sample_seed, "config");
  read(j, "kde_grid", s.kde_grid, "config");
  if (j.contains("teacher")) s.teacher = model_from_json(j["teacher"], s.teacher, "teacher");
  if (j.contains("student")) s.student = model_from_json(j["student"], s.student, "student");
  if (j.contains("teacher_ladder")) {
    if (!j["teacher_ladder"].is_array()) throw ConfigError("teacher_ladder must be an array");
    s.teacher_ladder.clear();
    for (std::size_t i = 0; i < j["teacher_ladder"].size(); ++i) {
      s.teacher_ladder.push_back(
          model_from_json(j["teacher_ladder"][i], ModelConfig{0, 0, 0, 0, s.teacher.context_len, 0},
                          "teacher_ladder[" + std::to_string(i) + "]"));
    }
  } else {
    for (auto& c : s.teacher_ladder) c.context_len = s.teacher.context_len;
  }
  if (j.contains("objective")) {
    const json& o = j["objective"];
    reject_unknown(o, {"mode", "k_ratio", "lambda", "alpha"}, "objective");
    if (o.contains("mode")) {
      std::string m;
      read(o, "mode", m, "objective");
      try {
        s.objective.mode = parse_mode(m);
      } catch (const Error& e) {
        throw ConfigError(std::string("objective.mode: ") + e.what());
      }
    }
    read(o, "k_ratio", s.objective.k_ratio, "objective");
    read(o, "lambda", s.objective.lambda, "objective");
    read(o, "alpha", s.objective.alpha, "objective");
  }
  if (j.contains("student_train"))
    s.student_train = train_from_json(j["student_train"], s.student_train, "student_train");
  if (j.contains("teacher_train"))
    s.teacher_train = train_from_json(j["teacher_train"], s.teacher_train, "teacher_train");
  if (j.contains("sweep")) {
    const json& w = j["sweep"];
    reject_unknown(w, {"parameter", "values"}, "sweep");
    SweepSpec sw;
    read(w, "parameter", sw.parameter, "sweep");
    if (w.contains("values")) read(w, "values", sw.values, "sweep");
    else sw.values = default_sweep_values(sw.parameter, s.teacher_ladder.size());
    s.sweep = sw;
  }
  s.validate();
  return s;
}

json model_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"context_len", c.context_len}};
}

json objective_to_json(const ObjectiveConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"k_ratio", c.k_ratio},
          {"lambda", c.lambda},
          {"alpha", c.alpha}};
}

json spec_to_json(const ExperimentSpec& s) {
  json ladder = json::array();
  for (const auto& c : s.teacher_ladder) ladder.push_back(model_to_json(c));
  json j{{"experiment", std::string(to_string(s.experiment))},
         {"corpus", s.corpus_path},
         {"train_fraction", s.train_fraction},
         {"seeds", s.seeds},
         {"teacher", model_to_json(s.teacher)},
         {"student", model_to_json(s.student)},
         {"teacher_ladder", ladder},
         {"objective", objective_to_json(s.objective)},
         {"student_train", train_to_json(s.student_train)},
         {"teacher_train", train_to_json(s.teacher_train)},
         {"unc_sample_tokens", s.unc_sample_tokens},
         {"unc_sample_seed", s.unc_sample_seed},
         {"kde_grid", s.kde_grid}};
  if (s.sweep) j["sweep"] = {{"parameter", s.sweep->parameter}, {"values", s.sweep->values}};
  return j;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

json RunRecord::to_json() const {
  json ev = json::array();
  for (const auto& e : evals)
    ev.push_back({{"step", e.step}, {"train_loss", e.train_loss}, {"val_ppl", e.val_ppl}});
  return {{"experiment", experiment}, {"label", label},   {"seed", seed},
          {"config", config},         {"evals", ev},      {"final_ppl", final_ppl},
          {"wall_time_s", wall_time_s}};
}

RunRecord RunRecord::from_json(const json& j) {
  try {
    RunRecord r;
    r.experiment = j.at("experiment").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    for (const auto& e : j.at("evals")) {
      r.evals.push_back({e.at("step").get<std::uint64_t>(), e.at("train_loss").get<double>(),
                         e.at("val_ppl").get<double>()});
    }
    r.final_ppl = j.at("final_ppl").get<double>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed run record: ") + e.what());
  }
}

bool RunRecord::same_result(const RunRecord& o) const {
  return experiment == o.experiment && label == o.label && seed == o.seed && config == o.config &&
         evals == o.evals && final_ppl == o.final_ppl;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << r.to_json().dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<RunRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<RunRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(RunRecord::from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw InvalidInput(path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace atkd
