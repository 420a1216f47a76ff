// SPDX-License-Identifier: Apache-2.0
#pragma once

// Logit file, little-endian:
//
//   "ATKD-LGT"    8 bytes
//   version       u32 (1)
//   T             u64
//   C             u64
//   flags         u32, bit 0 = student logits present
//   teacher       f32[T][C]
//   student       f32[T][C] (only with bit 0)
//   targets       u32[T]
//   mask          u8[T], each 0 or 1

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "atkd/decomposition.hpp"
#include "atkd/objective.hpp"

namespace atkd {

inline constexpr std::uint32_t kLogitFileVersion = 1;
inline constexpr std::uint32_t kFlagHasStudent = 1u;

struct LogitFile {
  std::uint64_t tokens = 0;
  std::uint64_t classes = 0;
  std::vector<float> teacher;
  std::optional<std::vector<float>> student;
  std::vector<std::uint32_t> targets;
  std::vector<std::uint8_t> mask;

  bool has_student() const noexcept { return student.has_value(); }

  /// Upcasts to double. Without student logits the teacher logits stand in
  /// for them. InvalidInput if the file breaks a batch invariant.
  LogitBatch batch() const;

  /// Narrows logits to f32.
  static LogitFile from_batch(const LogitBatch& batch, bool with_student = true);

  bool operator==(const LogitFile&) const = default;
};

/// Expected byte length of a file with the given shape.
std::uint64_t logit_file_size(std::uint64_t tokens, std::uint64_t classes, bool has_student);

/// InvalidInput if the in-memory file is inconsistent.
std::vector<std::uint8_t> encode_logit_file(const LogitFile& file);

/// ParseError with the offending byte offset: BadMagic, UnsupportedVersion,
/// InvalidHeader (unknown flag bits, C < 2, sizes that overflow), Truncated,
/// TrailingBytes, NonFiniteValue, InvalidTarget (target >= C), InvalidMask.
LogitFile decode_logit_file(std::span<const std::uint8_t> bytes);

LogitFile read_logit_file(const std::filesystem::path& path);
void write_logit_file(const std::filesystem::path& path, const LogitFile& file);

/// CSV `token_index,unc,tkd,dkd,kl_total,split`, one row per mask-true token
/// in index order. DimensionError if the split does not match the mask.
void write_report(const TokenDecomposition& decomposition, const TokenSplit& split,
                  const std::filesystem::path& path);

}  // namespace atkd
