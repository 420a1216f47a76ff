// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model checkpoint file, little-endian:
//
//   "ATKD-CKPT"          9 bytes
//   version              u32 (1)
//   vocab_size, d_model, n_layers, n_heads, context_len   u32 each
//   seed                 u64
//   steps                u64
//   P                    u64
//   params               f32[P]
//   corpus hash          32 bytes (SHA-256)

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "atkd/corpus.hpp"
#include "atkd/tiny_lm.hpp"

namespace atkd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::uint64_t steps = 0;
  std::vector<float> params;
  Digest corpus_hash{};

  TinyLM model() const { return TinyLM(config, params); }
  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const TinyLM& model, std::uint64_t steps, const Digest& corpus_hash);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

/// ParseError on bad magic, version, truncation, trailing bytes, a config
/// that fails validation, a parameter count that disagrees with the config,
/// or non-finite parameters.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// TrainingDivergence if any parameter is non-finite (nothing is written);
/// IoError on write failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 of the encoded checkpoint.
Digest checkpoint_digest(const Checkpoint& ckpt);

}  // namespace atkd
