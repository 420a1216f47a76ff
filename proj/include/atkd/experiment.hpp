// SPDX-License-Identifier: Apache-2.0
#pragma once

// Declarative experiment description (JSON) and per-run records (JSONL).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "atkd/objective.hpp"
#include "atkd/tiny_lm.hpp"
#include "json.hpp"

namespace atkd {

enum class Experiment {
  Distill,
  TokenSplit,
  ObjectiveAblation,
  AlphaSweep,
  KSweep,
  LambdaSweep,
  TeacherSweep,
  UncDist,
  Landscape,
};

std::string_view to_string(Experiment e) noexcept;
/// ConfigError on unknown names.
Experiment parse_experiment(std::string_view name);

struct SweepSpec {
  std::string parameter;  // k_ratio, lambda, alpha or teacher_size
  std::vector<double> values;
};

/// Default grid for a sweep parameter: k and lambda in 0, 0.1, ..., 1;
/// alpha in 0, 0.25, ..., 1; teacher_size indexes the ladder.
std::vector<double> default_sweep_values(std::string_view parameter, std::size_t ladder_size = 4);

/// Optimization settings shared by teacher and student training.
struct TrainOptions {
  std::uint64_t steps = 3000;
  std::uint32_t batch_size = 32;
  double lr = 3e-4;
  std::uint64_t warmup = 100;
  std::uint64_t eval_interval = 200;
  std::size_t eval_tokens = 0;  // 0: the whole validation split
  Precision precision = Precision::Float32;
  double ce_mix = 0.0;  // weight of ground-truth cross-entropy added to the KD loss

  /// Linear warmup to lr over `warmup` steps, constant afterwards. step is 0-based.
  double learning_rate(std::uint64_t step) const;
  void validate() const;
};

struct ExperimentSpec {
  Experiment experiment = Experiment::Distill;
  std::string corpus_path = "data/corpus.txt";
  double train_fraction = 0.9;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  // vocab_size and seed are filled in at run time from the corpus and run seed.
  ModelConfig teacher{0, 128, 4, 4, 128, 0};
  ModelConfig student{0, 32, 2, 2, 128, 0};
  std::vector<ModelConfig> teacher_ladder{
      {0, 48, 2, 4, 128, 0}, {0, 96, 3, 4, 128, 0}, {0, 128, 4, 4, 128, 0}, {0, 192, 4, 4, 128, 0}};

  ObjectiveConfig objective{Mode::ATKD, 0.5, 0.2, 1.0};
  TrainOptions student_train;
  TrainOptions teacher_train;
  std::optional<SweepSpec> sweep;

  std::size_t unc_sample_tokens = 10240;
  std::uint64_t unc_sample_seed = 0;
  std::size_t kde_grid = 256;

  /// ConfigError naming the offending field.
  void validate() const;
};

/// ConfigError on unknown keys, wrong types or invalid values. Missing keys
/// keep their defaults.
ExperimentSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ExperimentSpec& spec);
/// IoError if unreadable, ConfigError if malformed.
ExperimentSpec load_spec(const std::filesystem::path& path);

nlohmann::json model_to_json(const ModelConfig& c);
nlohmann::json objective_to_json(const ObjectiveConfig& c);

struct EvalPoint {
  std::uint64_t step = 0;
  double train_loss = 0.0;  // mean training loss since the previous point
  double val_ppl = 0.0;

  bool operator==(const EvalPoint&) const = default;
};

struct RunRecord {
  std::string experiment;
  std::string label;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<EvalPoint> evals;
  double final_ppl = 0.0;
  double wall_time_s = 0.0;  // not part of reproducibility comparisons

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  /// Equality on everything except wall time.
  bool same_result(const RunRecord& other) const;
};

/// One JSON object per line.
void write_jsonl(const std::filesystem::path& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace atkd
