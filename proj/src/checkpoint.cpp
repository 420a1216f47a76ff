// SPDX-License-Identifier: Apache-2.0
#include "atkd/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "atkd/error.hpp"
#include "bytes.hpp"

namespace atkd {

namespace {

constexpr std::string_view kMagic = "ATKD-CKPT";

}  // namespace

Checkpoint make_checkpoint(const TinyLM& model, std::uint64_t steps, const Digest& corpus_hash) {
  Checkpoint c;
  c.config = model.config();
  c.steps = steps;
  c.params.assign(model.params().begin(), model.params().end());
  c.corpus_hash = corpus_hash;
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  detail::ByteWriter w;
  w.bytes().reserve(kMagic.size() + 60 + 4 * ckpt.params.size());
  w.put_str(kMagic);
  w.put_u32(kCheckpointVersion);
  w.put_u32(ckpt.config.vocab_size);
  w.put_u32(ckpt.config.d_model);
  w.put_u32(ckpt.config.n_layers);
  w.put_u32(ckpt.config.n_heads);
  w.put_u32(ckpt.config.context_len);
  w.put_u64(ckpt.config.seed);
  w.put_u64(ckpt.steps);
  w.put_u64(ckpt.params.size());
  for (float p : ckpt.params) w.put_f32(p);
  w.put_bytes(ckpt.corpus_hash);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(kMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw ParseError(ParseErrorKind::BadMagic, 0, "not a checkpoint file");
  }
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError(ParseErrorKind::UnsupportedVersion, version_at,
                     "version " + std::to_string(version));
  }
  Checkpoint c;
  const std::uint64_t config_at = r.offset();
  c.config.vocab_size = r.u32("vocab_size");
  c.config.d_model = r.u32("d_model");
  c.config.n_layers = r.u32("n_layers");
  c.config.n_heads = r.u32("n_heads");
  c.config.context_len = r.u32("context_len");
  c.config.seed = r.u64("seed");
  c.steps = r.u64("steps");
  try {
    c.config.validate();
  } catch (const ConfigError& e) {
    throw ParseError(ParseErrorKind::InvalidHeader, config_at, e.what());
  }
  const std::uint64_t count_at = r.offset();
  const std::uint64_t count = r.u64("parameter count");
  if (count != parameter_count(c.config)) {
    throw ParseError(ParseErrorKind::InvalidHeader, count_at,
                     "parameter count " + std::to_string(count) + " does not match config (" +
                         std::to_string(parameter_count(c.config)) + ")");
  }
  r.need(count * 4, "parameters");
  c.params.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t at = r.offset();
    c.params[i] = r.f32("parameter");
    if (!std::isfinite(c.params[i])) {
      throw ParseError(ParseErrorKind::NonFiniteValue, at, "parameter " + std::to_string(i));
    }
  }
  const auto hash = r.take(c.corpus_hash.size(), "corpus hash");
  std::copy(hash.begin(), hash.end(), c.corpus_hash.begin());
  r.expect_end();
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    if (!std::isfinite(ckpt.params[i])) {
      throw TrainingDivergence("refusing to save non-finite parameter " + std::to_string(i),
                               static_cast<std::int64_t>(ckpt.steps));
    }
  }
  detail::write_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_bytes(path));
}

Digest checkpoint_digest(const Checkpoint& ckpt) { return sha256(encode_checkpoint(ckpt)); }

}  // namespace atkd
