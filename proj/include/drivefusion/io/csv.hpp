#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "drivefusion/core/error.hpp"
#include "drivefusion/core/strings.hpp"

namespace df {

// Minimal CSV: no quoting, fields must not contain commas. All files this
// project writes satisfy that (zone tags use '|' as inner separator).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw DataError("csv: missing column " + name);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("read_csv: cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("read_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split(line, ',');
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    t.rows.push_back(split(line, ','));
    if (t.rows.back().size() != t.header.size())
      throw DataError(strfmt("read_csv: row %zu of %s has %zu fields, expected %zu", t.rows.size(),
                             path.c_str(), t.rows.back().size(), t.header.size()));
  }
  return t;
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_csv: cannot open " + path);
  out << join(t.header, ',') << "\n";
  for (const auto& row : t.rows) out << join(row, ',') << "\n";
  if (!out) throw DataError("write_csv: write failed for " + path);
}

inline double parse_double(const std::string& s) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("csv: cannot parse number '" + s + "'");
  }
}

inline int64_t parse_int(const std::string& s) {
  try {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw DataError("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("csv: cannot parse integer '" + s + "'");
  }
}

}  // namespace df
