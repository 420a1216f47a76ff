// SPDX-License-Identifier: Apache-2.0
#pragma once

// Byte-level corpus handling: vocabulary, train/validation split and seeded
// batch sampling.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atkd {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of a byte range.
Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);

/// Sorted distinct byte values of `text`.
std::vector<std::uint8_t> byte_vocabulary(std::string_view text);

/// Maps each byte to its index in `vocab`. InvalidInput on bytes not in vocab.
std::vector<std::uint32_t> encode(std::span<const std::uint8_t> vocab, std::string_view text);
std::string decode(std::span<const std::uint8_t> vocab, std::span<const std::uint32_t> ids);

struct Corpus {
  std::vector<std::uint8_t> vocab;
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> val;
  Digest hash{};  // over the raw file bytes

  std::uint32_t vocab_size() const noexcept { return static_cast<std::uint32_t>(vocab.size()); }
};

/// Contiguous split: the first floor(train_fraction * n) tokens train, the
/// rest validate. InvalidInput for an empty file, a single-symbol vocabulary,
/// or a fraction that leaves either side with fewer than 2 tokens.
Corpus make_corpus(std::string_view text, double train_fraction = 0.9);

/// IoError if the file cannot be read.
Corpus load_corpus(const std::filesystem::path& path, double train_fraction = 0.9);

/// Inputs and next-token targets for `batch` windows of `seq_len` tokens.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> targets;
};

/// Windows start at uniformly drawn offsets of the token stream.
class BatchSampler {
 public:
  /// InvalidInput if the stream holds fewer than seq_len + 1 tokens.
  BatchSampler(std::span<const std::uint32_t> tokens, std::size_t batch, std::size_t seq_len,
               std::uint64_t seed);

  TokenBatch next();

 private:
  std::span<const std::uint32_t> tokens_;
  std::size_t batch_;
  std::size_t seq_len_;
  std::mt19937_64 rng_;
};

}  // namespace atkd
