// SPDX-License-Identifier: Apache-2.0
#include "atkd/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "atkd/error.hpp"

namespace atkd {

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) s += ',';
    s += fields[i];
  }
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view field) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw InvalidInput("not a number: '" + std::string(field) + "'");
  }
  return v;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw InvalidInput("no column named '" + std::string(name) + "'");
}

std::vector<double> CsvTable::numbers(std::string_view name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(parse_double(r[c]));
  return out;
}

CsvTable parse_csv(std::string_view text) {
  if (text.find('\r') != std::string_view::npos) throw InvalidInput("CSV contains CR characters");
  CsvTable t;
  bool have_header = false;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.front() == '#') {
      t.comments.emplace_back(line.substr(1));
      continue;
    }
    if (!have_header) {
      t.header = split_fields(line);
      have_header = true;
      continue;
    }
    auto fields = split_fields(line);
    if (fields.size() != t.header.size()) {
      throw InvalidInput("CSV line " + std::to_string(line_no) + " has " +
                         std::to_string(fields.size()) + " fields, header has " +
                         std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw InvalidInput("CSV has no header line");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

CsvWriter::CsvWriter(std::vector<std::string> header)
    : width_(header.size()), header_(std::move(header)) {}

void CsvWriter::comment(std::string_view text) {
  if (text.find_first_of("\n\r") != std::string_view::npos) {
    throw InvalidInput("comment contains a line break");
  }
  comments_ += '#';
  comments_ += text;
  comments_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != width_) {
    throw InvalidInput("row has " + std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(width_));
  }
  for (const auto& f : fields) {
    if (f.find_first_of(",\n\r") != std::string::npos) {
      throw InvalidInput("field '" + f + "' contains a separator");
    }
  }
  body_ += join(fields);
  body_ += '\n';
}

std::string CsvWriter::str() const { return comments_ + join(header_) + '\n' + body_; }

void CsvWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << str();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace atkd
