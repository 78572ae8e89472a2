#pragma once

// Seeded finite-difference sweep over every loss, the LSTM at several
// sequence lengths, and the assembled model.

#include <cstdint>
#include <string>
#include <vector>

namespace tlane {

struct SuiteEntry {
  std::string name;
  int cases = 0;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  int worst_case = -1;
  bool passed = true;
};

struct SuiteReport {
  std::vector<SuiteEntry> entries;
  double threshold = 1e-4;
  bool passed = true;
  std::string worst_entry;
  double worst_error = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 2024;
  int cases = 100;
  int model_cases = 100;
  double threshold = 1e-4;
  double step = 1e-5;
  /// Name of one entry whose analytic gradient is deliberately scaled by
  /// 1.01 before comparison. Empty for a normal run.
  std::string corrupt;
};

std::vector<std::string> gradcheck_entry_names();
SuiteReport run_gradcheck_suite(const SuiteOptions& options);
std::string format_report(const SuiteReport& report);

}  // namespace tlane
