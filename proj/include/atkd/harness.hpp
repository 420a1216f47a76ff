// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training loops and experiment runners.
//
// Every run is a pure function of its configuration and seeds. Students that
// share a teacher and a data stream can be trained in lockstep, one teacher
// forward per batch; each student's trajectory is identical to a solo run.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atkd/checkpoint.hpp"
#include "atkd/corpus.hpp"
#include "atkd/experiment.hpp"
#include "atkd/objective.hpp"
#include "atkd/tiny_lm.hpp"

namespace atkd {

/// Independent stream seeds from one run seed (splitmix64 of seed and stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum SeedStream : std::uint64_t {
  kTeacherInit = 1,
  kTeacherData = 2,
  kStudentInit = 3,
  kStudentData = 4,
};

using Logger = std::function<void(const std::string&)>;

struct TrainResult {
  Checkpoint initial;
  Checkpoint checkpoint;
  RunRecord record;
  std::vector<double> losses;  // one per optimizer step
};

/// Validation tokens used for evaluation under these options.
std::span<const std::uint32_t> eval_tokens(const Corpus& corpus, const TrainOptions& opts);

/// Next-token cross-entropy training from cfg.seed. cfg.vocab_size 0 means
/// the corpus vocabulary. TrainingDivergence on a non-finite loss;
/// TrainingFailure if the final validation perplexity is not below the
/// vocabulary size.
TrainResult train_teacher(const Corpus& corpus, ModelConfig cfg, const TrainOptions& opts,
                          std::uint64_t data_seed, const std::string& label = "teacher",
                          const Logger& log = {});

enum class TokenSet { Full, Hard, Easy };
std::string_view to_string(TokenSet s) noexcept;

/// Mask selecting the hard (top-k by teacher UnC) or easy tokens of a batch.
std::vector<std::uint8_t> token_set_mask(std::span<const double> unc, TokenSet set, double k_ratio);

struct StudentRun {
  std::string label;
  ModelConfig config;  // vocab_size 0 means the corpus vocabulary
  ObjectiveConfig objective;
  TokenSet tokens = TokenSet::Full;
  double token_k = 0.5;                   // hard fraction for Hard/Easy token sets
  std::optional<std::vector<float>> init;  // replaces the seeded initialization
};

/// Trains all runs on the same batch stream under a frozen teacher. Batches
/// whose token set is empty are skipped for that student. ConfigError if a
/// student's vocabulary or context length does not match the teacher.
std::vector<TrainResult> distill_group(const Corpus& corpus, const Checkpoint& teacher,
                                       const std::vector<StudentRun>& runs,
                                       const TrainOptions& opts, std::uint64_t data_seed,
                                       const Logger& log = {});

TrainResult distill(const Corpus& corpus, const Checkpoint& teacher, const StudentRun& run,
                    const TrainOptions& opts, std::uint64_t data_seed, const Logger& log = {});

/// Windows of context_len tokens covering about `tokens` tokens of the
/// training split, drawn with a fixed seed.
struct UncSample {
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
  std::size_t windows = 0;
  std::size_t seq_len = 0;
};
UncSample unc_sample(const Corpus& corpus, std::size_t tokens, std::size_t seq_len,
                     std::uint64_t seed);

/// Teacher non-target mass 1 - p(target) at every sampled position.
std::vector<double> sample_unc(const TinyLM& teacher, const UncSample& sample);

double median(std::vector<double> v);

struct LandscapePoint {
  double beta = 0.0;
  double perplexity = 0.0;
};

/// Perplexity of theta1 + beta (theta1 - theta0) at `points` evenly spaced
/// betas in [-1, 1]. ConfigError if the checkpoints' configs differ.
std::vector<LandscapePoint> landscape(const Checkpoint& theta0, const Checkpoint& theta1,
                                      std::span<const std::uint32_t> tokens,
                                      std::size_t points = 21);
void write_landscape(const std::vector<LandscapePoint>& curve, const std::filesystem::path& path);

/// Calls fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

/// Keeps large per-step training buffers in the heap instead of mapping and
/// unmapping them on every step. Process-wide; a no-op off glibc.
void tune_allocator();

struct RunContext {
  std::filesystem::path out_dir = "out";
  unsigned jobs = 1;
  std::vector<std::filesystem::path> teachers;  // pre-trained teachers, else trained per seed
  std::optional<std::filesystem::path> theta0, theta1;
  Logger log;
};

struct ExperimentOutput {
  std::vector<RunRecord> records;
  std::vector<std::filesystem::path> files;
};

/// Runs spec.experiment for every seed, writing checkpoints, CSVs and
/// runs.jsonl under ctx.out_dir.
ExperimentOutput run_experiment(const ExperimentSpec& spec, const RunContext& ctx);

}  // namespace atkd
