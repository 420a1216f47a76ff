// SPDX-License-Identifier: Apache-2.0
#include "atkd/corpus.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>

#include "atkd/error.hpp"
#include "bytes.hpp"

namespace atkd {

Digest sha256(std::span<const std::uint8_t> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : d) {
    s += kHex[b >> 4];
    s += kHex[b & 15];
  }
  return s;
}

std::vector<std::uint8_t> byte_vocabulary(std::string_view text) {
  std::array<bool, 256> seen{};
  for (char c : text) seen[static_cast<std::uint8_t>(c)] = true;
  std::vector<std::uint8_t> vocab;
  for (int b = 0; b < 256; ++b)
    if (seen[b]) vocab.push_back(static_cast<std::uint8_t>(b));
  return vocab;
}

std::vector<std::uint32_t> encode(std::span<const std::uint8_t> vocab, std::string_view text) {
  std::array<int, 256> index;
  index.fill(-1);
  for (std::size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = static_cast<int>(i);
  std::vector<std::uint32_t> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = index[static_cast<std::uint8_t>(text[i])];
    if (id < 0) {
      throw InvalidInput("byte " + std::to_string(static_cast<std::uint8_t>(text[i])) +
                         " at offset " + std::to_string(i) + " is not in the vocabulary");
    }
    ids.push_back(static_cast<std::uint32_t>(id));
  }
  return ids;
}

std::string decode(std::span<const std::uint8_t> vocab, std::span<const std::uint32_t> ids) {
  std::string s;
  s.reserve(ids.size());
  for (std::uint32_t id : ids) {
    if (id >= vocab.size()) throw IndexError("token id " + std::to_string(id) + " out of range");
    s += static_cast<char>(vocab[id]);
  }
  return s;
}

Corpus make_corpus(std::string_view text, double train_fraction) {
  if (text.empty()) throw InvalidInput("corpus is empty");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidInput("train fraction must lie in (0, 1)");
  }
  Corpus c;
  c.vocab = byte_vocabulary(text);
  if (c.vocab.size() < 2) throw InvalidInput("corpus needs at least 2 distinct bytes");
  c.hash = sha256({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  auto ids = encode(c.vocab, text);
  const auto cut = static_cast<std::size_t>(std::floor(train_fraction * double(ids.size())));
  if (cut < 2 || ids.size() - cut < 2) {
    throw InvalidInput("corpus of " + std::to_string(ids.size()) +
                       " bytes is too small to split");
  }
  c.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut), ids.end());
  ids.resize(cut);
  c.train = std::move(ids);
  return c;
}

Corpus load_corpus(const std::filesystem::path& path, double train_fraction) {
  const auto bytes = detail::read_bytes(path);
  return make_corpus({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, train_fraction);
}

BatchSampler::BatchSampler(std::span<const std::uint32_t> tokens, std::size_t batch,
                           std::size_t seq_len, std::uint64_t seed)
    : tokens_(tokens), batch_(batch), seq_len_(seq_len), rng_(seed) {
  if (batch == 0 || seq_len == 0) throw InvalidInput("batch and seq_len must be positive");
  if (tokens.size() < seq_len + 1) {
    throw InvalidInput("token stream of " + std::to_string(tokens.size()) +
                       " is shorter than one window of " + std::to_string(seq_len + 1));
  }
}

TokenBatch BatchSampler::next() {
  TokenBatch b;
  b.batch = batch_;
  b.seq_len = seq_len_;
  b.inputs.reserve(batch_ * seq_len_);
  b.targets.reserve(batch_ * seq_len_);
  const std::uint64_t last = tokens_.size() - seq_len_ - 1;
  for (std::size_t i = 0; i < batch_; ++i) {
    // Modulo draw rather than a distribution object: identical across standard libraries.
    const std::size_t start = static_cast<std::size_t>(rng_() % (last + 1));
    b.inputs.insert(b.inputs.end(), tokens_.begin() + start, tokens_.begin() + start + seq_len_);
    b.targets.insert(b.targets.end(), tokens_.begin() + start + 1,
                     tokens_.begin() + start + seq_len_ + 1);
  }
  return b;
}

}  // namespace atkd
