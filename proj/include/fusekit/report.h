// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FUSEKIT_REPORT_H_
#define FUSEKIT_REPORT_H_

#include <string>
#include <vector>

#include "json.hpp"

namespace fusekit {

// Deterministic JSON: sorted keys, two-space indent, floats with 17
// significant digits, non-finite floats as null.
std::string dump_report(const nlohmann::json& report);

// Column-aligned plain-text table for terminal output.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  std::string render() const;

 private:
  std::vector<std::vector<std::string>> rows_;
};

// Fixed-point formatting for human tables.
std::string fixed(double value, int decimals);

}  // namespace fusekit

#endif  // FUSEKIT_REPORT_H_
