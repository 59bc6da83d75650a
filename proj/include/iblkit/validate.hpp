// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace iblkit {

struct CheckLine {
  std::string name;
  double measured = 0;
  double threshold = 0;
  bool pass = false;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckLine> checks;

  bool pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// Suites: brdf, lut, kernel, volume, splitsum, gradients, counters.
SuiteReport run_validate_suite(const std::string& suite, std::uint64_t seed = 0);

void print_report(const SuiteReport& report);

}  // namespace iblkit
