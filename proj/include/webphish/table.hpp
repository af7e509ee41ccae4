#pragma once

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "webphish/common.hpp"
#include "webphish/corpus.hpp"

namespace webphish {

using Row = std::vector<double>;
using Matrix = std::vector<Row>;

/// Shortest decimal that parses back to the same double.
inline std::string format_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// RFC 4180 quoting, applied only when the field needs it.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

/// Splits one CSV record. Quoted fields may contain commas and doubled quotes but not
/// line breaks.
inline std::vector<std::string> csv_split(std::string_view line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  return out;
}

/// Rows of numeric columns keyed by sample id and label.
struct LabeledTable {
  std::vector<std::string> columns;  // numeric column names, excluding id and label
  std::vector<std::string> ids;
  Matrix rows;
  std::vector<int> labels;
};

/// Reads `id,label,<numeric columns...>`. Labels are legitimate|phishing or 0|1.
inline LabeledTable read_labeled_csv(std::istream& in) {
  LabeledTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = csv_split(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw DataError("CSV header must start with id,label and name at least one column");
  t.columns.assign(header.begin() + 2, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv_split(line);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != header.size())
      throw DataError(where + "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    t.ids.push_back(fields[0]);
    if (fields[1] == "0" || fields[1] == "1")
      t.labels.push_back(fields[1] == "1");
    else
      t.labels.push_back(label_value(parse_label(fields[1])));
    Row r(fields.size() - 2);
    for (std::size_t j = 2; j < fields.size(); ++j) {
      const auto& f = fields[j];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), r[j - 2]);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size() || !std::isfinite(r[j - 2]))
        throw DataError(where + "bad number '" + f + "' in column " + header[j]);
    }
    t.rows.push_back(std::move(r));
  }
  if (t.rows.empty()) throw DataError("CSV has no data rows");
  return t;
}

inline void write_labeled_csv(std::ostream& out, const LabeledTable& t) {
  out << "id,label";
  for (const auto& c : t.columns) out << ',' << csv_field(c);
  out << '\n';
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out << csv_field(t.ids[i]) << ',' << (t.labels[i] ? "phishing" : "legitimate");
    for (double v : t.rows[i]) out << ',' << format_number(v);
    out << '\n';
  }
}

}  // namespace webphish
