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


// Versioned CSV tables. The first line is "#schema=<name>/<version>", the
// second the header; cells never contain commas or newlines.

#ifndef ESPLIT_CSV_H_
#define ESPLIT_CSV_H_

#include <string>
#include <vector>

namespace esplit {

struct CsvTable {
  std::string schema;  // e.g. "rd/1"
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  int column(const std::string& name) const;
  const std::string& at(size_t row, const std::string& col) const;
  double number(size_t row, const std::string& col) const;
};

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string to_csv(const CsvTable& t);
// Throws kFormat unless the schema line and header match exactly.
CsvTable parse_csv(const std::string& text, const std::string& schema, const std::vector<std::string>& columns);
void write_csv(const std::string& path, const CsvTable& t);
CsvTable read_csv(const std::string& path, const std::string& schema, const std::vector<std::string>& columns);

}  // namespace esplit

#endif  // ESPLIT_CSV_H_
