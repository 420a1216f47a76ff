// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal CSV support for the tool's own outputs: comma separated, no quoting,
// LF line endings, lines starting with '#' are comments.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace atkd {

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// InvalidInput unless the whole field is a number.
double parse_double(std::string_view field);

struct CsvTable {
  std::vector<std::string> comments;  // without the leading '#', in file order
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; InvalidInput if absent.
  std::size_t column(std::string_view name) const;
  /// Column parsed as doubles.
  std::vector<double> numbers(std::string_view name) const;
};

/// IoError on read failure; InvalidInput on a missing header, CR characters,
/// or rows whose width differs from the header.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

/// Builds a file in memory and writes it in one go.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);

  void comment(std::string_view text);
  /// Fields are written verbatim; InvalidInput if the width is wrong or a
  /// field contains a separator or newline.
  void row(const std::vector<std::string>& fields);

  /// Comments, then the header, then the rows.
  std::string str() const;
  /// IoError on failure, with the path in the message.
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t width_;
  std::vector<std::string> header_;
  std::string comments_;
  std::string body_;
};

}  // namespace atkd
