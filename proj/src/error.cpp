// SPDX-License-Identifier: Apache-2.0
#include "atkd/error.hpp"

namespace atkd {

const char* to_string(ParseErrorKind kind) noexcept {
  switch (kind) {
    case ParseErrorKind::BadMagic: return "bad magic";
    case ParseErrorKind::UnsupportedVersion: return "unsupported version";
    case ParseErrorKind::Truncated: return "truncated";
    case ParseErrorKind::TrailingBytes: return "trailing bytes";
    case ParseErrorKind::InvalidTarget: return "invalid target";
    case ParseErrorKind::InvalidMask: return "invalid mask";
    case ParseErrorKind::NonFiniteValue: return "non-finite value";
    case ParseErrorKind::InvalidHeader: return "invalid header";
  }
  return "unknown";
}

ParseError::ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail)
    : Error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) +
            (detail.empty() ? "" : ": " + detail)),
      kind_(kind),
      offset_(offset) {}

}  // namespace atkd
