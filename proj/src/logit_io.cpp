// SPDX-License-Identifier: Apache-2.0
#include "atkd/logit_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string_view>

#include "atkd/csv.hpp"
#include "atkd/error.hpp"
#include "bytes.hpp"

namespace atkd {

namespace {

constexpr std::string_view kMagic = "ATKD-LGT";
constexpr std::uint64_t kHeaderSize = 8 + 4 + 8 + 8 + 4;

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

std::vector<float> narrow(std::span<const double> v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace

std::uint64_t logit_file_size(std::uint64_t tokens, std::uint64_t classes, bool has_student) {
  return kHeaderSize + 4 * tokens * classes * (has_student ? 2 : 1) + 4 * tokens + tokens;
}

LogitBatch LogitFile::batch() const {
  const auto& s = student ? *student : teacher;
  return LogitBatch(tokens, classes, widen(teacher), widen(s), targets, mask);
}

LogitFile LogitFile::from_batch(const LogitBatch& batch, bool with_student) {
  LogitFile f;
  f.tokens = batch.tokens();
  f.classes = batch.classes();
  f.teacher = narrow(batch.teacher());
  if (with_student) f.student = narrow(batch.student());
  f.targets = batch.targets();
  f.mask = batch.mask();
  return f;
}

std::vector<std::uint8_t> encode_logit_file(const LogitFile& f) {
  const std::uint64_t cells = f.tokens * f.classes;
  if (f.teacher.size() != cells || (f.student && f.student->size() != cells) ||
      f.targets.size() != f.tokens || f.mask.size() != f.tokens) {
    throw InvalidInput("logit file arrays do not match T=" + std::to_string(f.tokens) +
                       ", C=" + std::to_string(f.classes));
  }
  detail::ByteWriter w;
  w.bytes().reserve(logit_file_size(f.tokens, f.classes, f.has_student()));
  w.put_str(kMagic);
  w.put_u32(kLogitFileVersion);
  w.put_u64(f.tokens);
  w.put_u64(f.classes);
  w.put_u32(f.has_student() ? kFlagHasStudent : 0u);
  for (float v : f.teacher) w.put_f32(v);
  if (f.student)
    for (float v : *f.student) w.put_f32(v);
  for (std::uint32_t t : f.targets) w.put_u32(t);
  for (std::uint8_t m : f.mask) w.put_u8(m);
  return std::move(w.bytes());
}

LogitFile decode_logit_file(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(kMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw ParseError(ParseErrorKind::BadMagic, 0, "not a logit file");
  }
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kLogitFileVersion) {
    throw ParseError(ParseErrorKind::UnsupportedVersion, version_at,
                     "version " + std::to_string(version));
  }
  LogitFile f;
  f.tokens = r.u64("T");
  const std::uint64_t classes_at = r.offset();
  f.classes = r.u64("C");
  const std::uint64_t flags_at = r.offset();
  const std::uint32_t flags = r.u32("flags");
  if (flags & ~kFlagHasStudent) {
    throw ParseError(ParseErrorKind::InvalidHeader, flags_at,
                     "unknown flag bits " + std::to_string(flags));
  }
  if (f.classes < 2) {
    throw ParseError(ParseErrorKind::InvalidHeader, classes_at,
                     "C=" + std::to_string(f.classes) + " is below 2");
  }
  const bool has_student = flags & kFlagHasStudent;
  // Guard the size arithmetic before trusting it.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 16;
  if (f.tokens > limit || f.classes > limit / std::max<std::uint64_t>(f.tokens, 1)) {
    throw ParseError(ParseErrorKind::InvalidHeader, 12, "T * C overflows");
  }
  const std::uint64_t expect = logit_file_size(f.tokens, f.classes, has_student);
  if (bytes.size() < expect) {
    throw ParseError(ParseErrorKind::Truncated, bytes.size(),
                     "header implies " + std::to_string(expect) + " bytes");
  }
  const std::uint64_t cells = f.tokens * f.classes;
  auto read_logits = [&](std::vector<float>& out, const char* what) {
    out.resize(cells);
    for (std::uint64_t i = 0; i < cells; ++i) {
      const std::uint64_t at = r.offset();
      out[i] = r.f32(what);
      if (!std::isfinite(out[i])) {
        throw ParseError(ParseErrorKind::NonFiniteValue, at,
                         std::string(what) + " logit " + std::to_string(i / f.classes) + "," +
                             std::to_string(i % f.classes));
      }
    }
  };
  read_logits(f.teacher, "teacher");
  if (has_student) {
    f.student.emplace();
    read_logits(*f.student, "student");
  }
  f.targets.resize(f.tokens);
  for (std::uint64_t t = 0; t < f.tokens; ++t) {
    const std::uint64_t at = r.offset();
    f.targets[t] = r.u32("target");
    if (f.targets[t] >= f.classes) {
      throw ParseError(ParseErrorKind::InvalidTarget, at,
                       "target " + std::to_string(f.targets[t]) + " at token " +
                           std::to_string(t) + " is not below C=" + std::to_string(f.classes));
    }
  }
  f.mask.resize(f.tokens);
  for (std::uint64_t t = 0; t < f.tokens; ++t) {
    const std::uint64_t at = r.offset();
    f.mask[t] = r.u8("mask");
    if (f.mask[t] > 1) {
      throw ParseError(ParseErrorKind::InvalidMask, at,
                       "mask value " + std::to_string(f.mask[t]) + " at token " +
                           std::to_string(t));
    }
  }
  r.expect_end();
  return f;
}

LogitFile read_logit_file(const std::filesystem::path& path) {
  return decode_logit_file(detail::read_bytes(path));
}

void write_logit_file(const std::filesystem::path& path, const LogitFile& file) {
  detail::write_bytes(path, encode_logit_file(file));
}

void write_report(const TokenDecomposition& d, const TokenSplit& split,
                  const std::filesystem::path& path) {
  const std::size_t n = d.size();
  if (d.tkd.size() != n || d.dkd.size() != n || d.kl_total.size() != n || d.mask.size() != n) {
    throw DimensionError("decomposition columns differ in length");
  }
  std::vector<std::uint8_t> label(n, 0);  // 0 unassigned, 1 hard, 2 easy
  auto mark = [&](const std::vector<std::size_t>& idx, std::uint8_t v) {
    for (std::size_t i : idx) {
      if (i >= n || !d.mask[i] || label[i]) {
        throw DimensionError("split index " + std::to_string(i) +
                             " is out of range, masked out, or repeated");
      }
      label[i] = v;
    }
  };
  mark(split.hard, 1);
  mark(split.easy, 2);
  CsvWriter csv({"token_index", "unc", "tkd", "dkd", "kl_total", "split"});
  for (std::size_t i = 0; i < n; ++i) {
    if (!d.mask[i]) continue;
    if (!label[i]) throw DimensionError("token " + std::to_string(i) + " is in neither split");
    csv.row({std::to_string(i), format_double(d.unc[i]), format_double(d.tkd[i]),
             format_double(d.dkd[i]), format_double(d.kl_total[i]),
             label[i] == 1 ? "hard" : "easy"});
  }
  csv.save(path);
}

}  // namespace atkd
