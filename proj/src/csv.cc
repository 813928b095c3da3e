// Copyright 2026 The esplit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "esplit/csv.h"

#include <charconv>
#include <sstream>

#include "esplit/bytes.h"
#include "esplit/error.h"

namespace esplit {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    fail(ErrorKind::kInvalidArgument, "csv row has " + std::to_string(row.size()) + " cells, table has " +
                                          std::to_string(columns.size()) + " columns");
  }
  for (const std::string& c : row) {
    if (c.find_first_of(",\n\r") != std::string::npos) fail(ErrorKind::kInvalidArgument, "csv cell '" + c + "' needs quoting");
  }
  rows.push_back(std::move(row));
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  fail(ErrorKind::kInvalidArgument, "csv has no column '" + name + "'");
}

const std::string& CsvTable::at(size_t row, const std::string& col) const {
  return rows.at(row).at(static_cast<size_t>(column(col)));
}

double CsvTable::number(size_t row, const std::string& col) const {
  const std::string& s = at(row, col);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::kFormat, "csv cell '" + s + "' is not a number");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string to_csv(const CsvTable& t) {
  std::string out = "#schema=" + t.schema + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return out;
}

CsvTable parse_csv(const std::string& text, const std::string& schema, const std::vector<std::string>& columns) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "#schema=" + schema) {
    fail(ErrorKind::kFormat, "csv schema line '" + line + "' does not match '#schema=" + schema + "'");
  }
  CsvTable t;
  t.schema = schema;
  if (!std::getline(in, line) || split_line(line) != columns) fail(ErrorKind::kFormat, "csv header mismatch: '" + line + "'");
  t.columns = columns;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != columns.size()) fail(ErrorKind::kFormat, "csv row has wrong cell count: '" + line + "'");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& t) {
  const std::string s = to_csv(t);
  write_file(path, std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

CsvTable read_csv(const std::string& path, const std::string& schema, const std::vector<std::string>& columns) {
  const auto bytes = read_file(path);
  return parse_csv(std::string(bytes.begin(), bytes.end()), schema, columns);
}

}  // namespace esplit
