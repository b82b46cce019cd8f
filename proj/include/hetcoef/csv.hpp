#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "hetcoef/error.hpp"
#include "hetcoef/estimation.hpp"

namespace hetcoef {

// CSV schemas. Exclusive data: columns y, t, controls — t is an integer in
// 0..T with 0 the untreated state, and T is inferred as the largest t seen.
// General data: columns y, x1..xT, controls — each x in {0,1}, T from the
// header. Controls are a single label column `v` (discrete) or real columns
// v1..vd. Line numbers in errors count the header as line 1.

namespace detail {

inline constexpr int kMaxTreatments = 1000;

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(std::string_view token, const std::string& what, int line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value))
    throw Error("BAD_VALUE", "non-numeric " + what + " '" + std::string(token) +
                                 "' at line " + std::to_string(line));
  return value;
}

inline long parse_int(std::string_view token, const std::string& what, int line) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw Error("BAD_VALUE", "non-integer " + what + " '" + std::string(token) +
                                 "' at line " + std::to_string(line));
  return value;
}

inline std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvHeader {
  bool exclusive_schema = false;  // t column vs x1..xT columns
  int num_treatments = 0;         // 0 until inferred for the exclusive schema
  bool discrete_control = false;
  int control_dim = 0;
};

inline CsvHeader parse_header(const std::vector<std::string>& columns) {
  if (columns.empty() || columns[0] != "y")
    throw Error("MISSING_COLUMN", "first column must be 'y'");
  CsvHeader header;
  std::size_t pos = 1;
  if (pos < columns.size() && columns[pos] == "t") {
    header.exclusive_schema = true;
    ++pos;
  } else {
    int t = 0;
    while (pos < columns.size() && columns[pos] == "x" + std::to_string(t + 1)) {
      ++t;
      ++pos;
    }
    if (t == 0)
      throw Error("MISSING_COLUMN", "expected a 't' column or x1..xT columns after 'y'");
    if (t > kMaxTreatments)
      throw Error("BAD_VALUE", "too many treatment columns");
    header.num_treatments = t;
  }
  if (pos < columns.size() && columns[pos] == "v" && pos + 1 == columns.size()) {
    header.discrete_control = true;
    return header;
  }
  int d = 0;
  while (pos < columns.size() && columns[pos] == "v" + std::to_string(d + 1)) {
    ++d;
    ++pos;
  }
  if (d == 0 || pos != columns.size())
    throw Error("MISSING_COLUMN",
                "expected a control column 'v' or consecutive columns v1..vd");
  header.control_dim = d;
  return header;
}

}  // namespace detail

/// Parses a dataset from a stream. `mode` controls validation (exclusivity per
/// row for general-schema files) and the analysis mode of the dataset.
inline Dataset parse_csv(std::istream& in, Mode mode) {
  std::string line;
  if (!std::getline(in, line)) throw Error("EMPTY_DATASET", "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const detail::CsvHeader header = detail::parse_header(detail::split_csv_line(line));

  struct RawRow {
    double y;
    int t = 0;                    // exclusive schema
    std::vector<std::uint8_t> x;  // general schema
    ControlValue v;
  };
  std::vector<RawRow> raw;
  int line_no = 1;
  int max_t = 0;
  const std::size_t expected_fields = 1 +
                                      (header.exclusive_schema
                                           ? 1
                                           : static_cast<std::size_t>(header.num_treatments)) +
                                      (header.discrete_control
                                           ? 1
                                           : static_cast<std::size_t>(header.control_dim));
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != expected_fields)
      throw Error("BAD_VALUE", "expected " + std::to_string(expected_fields) +
                                   " fields, got " + std::to_string(fields.size()) +
                                   " at line " + std::to_string(line_no));
    RawRow row;
    std::size_t pos = 0;
    row.y = detail::parse_double(fields[pos++], "outcome y", line_no);
    if (header.exclusive_schema) {
      const long t = detail::parse_int(fields[pos++], "treatment index t", line_no);
      if (t < 0 || t > detail::kMaxTreatments)
        throw Error("BAD_VALUE",
                    "treatment index t out of range at line " + std::to_string(line_no));
      row.t = static_cast<int>(t);
      max_t = std::max(max_t, row.t);
    } else {
      row.x.resize(static_cast<std::size_t>(header.num_treatments));
      int treated = 0;
      for (int t = 0; t < header.num_treatments; ++t) {
        const std::string& field = fields[pos++];
        if (field != "0" && field != "1")
          throw Error("BAD_VALUE", "treatment indicator x" + std::to_string(t + 1) +
                                       " must be 0 or 1 at line " + std::to_string(line_no));
        row.x[static_cast<std::size_t>(t)] = field == "1" ? 1 : 0;
        treated += row.x[static_cast<std::size_t>(t)];
      }
      if (mode == Mode::kExclusive && treated > 1)
        throw Error("EXCLUSIVITY_VIOLATION",
                    "more than one treatment indicator set at line " +
                        std::to_string(line_no));
    }
    if (header.discrete_control) {
      if (fields[pos].empty())
        throw Error("BAD_VALUE", "empty control label at line " + std::to_string(line_no));
      row.v = fields[pos];
    } else {
      std::vector<double> v(static_cast<std::size_t>(header.control_dim));
      for (int j = 0; j < header.control_dim; ++j)
        v[static_cast<std::size_t>(j)] =
            detail::parse_double(fields[pos + static_cast<std::size_t>(j)],
                                 "control v" + std::to_string(j + 1), line_no);
      row.v = std::move(v);
    }
    raw.push_back(std::move(row));
  }
  if (raw.empty()) throw Error("EMPTY_DATASET", "no data rows");

  int T = header.num_treatments;
  if (header.exclusive_schema) {
    if (max_t == 0)
      throw Error("BAD_VALUE",
                  "every row is untreated (t=0); cannot infer the number of treatments");
    T = max_t;
  }
  std::vector<Observation> rows;
  rows.reserve(raw.size());
  for (auto& row : raw) {
    TreatmentProfile x = header.exclusive_schema
                             ? (row.t > 0 ? TreatmentProfile::single(T, row.t - 1)
                                          : TreatmentProfile::none(T))
                             : TreatmentProfile(std::move(row.x));
    rows.push_back(Observation{row.y, std::move(x), std::move(row.v)});
  }
  return Dataset(T, mode, std::move(rows));
}

inline Dataset load_csv(const std::string& path, Mode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IO_ERROR", "cannot open " + path);
  return parse_csv(in, mode);
}

/// Serializes a dataset: exclusive datasets use the t-column schema, general
/// ones the x1..xT schema. Doubles carry full round-trip precision.
inline std::string to_csv(const Dataset& data) {
  const bool exclusive = data.mode() == Mode::kExclusive;
  const int T = data.num_treatments();
  std::string out = "y";
  if (exclusive) {
    out += ",t";
  } else {
    for (int t = 1; t <= T; ++t) out += ",x" + std::to_string(t);
  }
  if (data.discrete_controls()) {
    out += ",v";
  } else {
    for (int j = 1; j <= data.control_dim(); ++j) out += ",v" + std::to_string(j);
  }
  out += '\n';
  for (const auto& row : data.rows()) {
    out += detail::format_full(row.y);
    if (exclusive) {
      int t = 0;
      for (int j = 0; j < T; ++j)
        if (row.x[j]) t = j + 1;
      out += ',' + std::to_string(t);
    } else {
      for (int j = 0; j < T; ++j) out += row.x[j] ? ",1" : ",0";
    }
    if (data.discrete_controls()) {
      const auto& label = std::get<std::string>(row.v);
      if (label.find_first_of(",\"\r\n") != std::string::npos)
        throw Error("BAD_VALUE", "control label '" + label + "' not representable in CSV");
      out += ',' + label;
    } else {
      for (double v : std::get<std::vector<double>>(row.v))
        out += ',' + detail::format_full(v);
    }
    out += '\n';
  }
  return out;
}

/// Whole-file atomic write: temp file in the same directory, then rename.
inline void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IO_ERROR", "cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("IO_ERROR", "failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("IO_ERROR", "cannot rename " + tmp + " to " + path);
}

inline void write_csv(const Dataset& data, const std::string& path) {
  write_text_atomic(path, to_csv(data));
}

}  // namespace hetcoef
