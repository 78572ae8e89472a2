#pragma once

#include <limits>
#include <vector>

namespace tlane {

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

struct Assignment {
  /// Column assigned to each row, or -1.
  std::vector<int> row_to_col;
  int matched = 0;
  double total_cost = 0.0;
};

/// Minimum-cost one-to-one assignment on a rectangular cost matrix (Hungarian
/// method). Entries equal to kForbidden are never assigned. Among all
/// matchings the result first maximizes the number of assigned pairs, then
/// minimizes their total cost.
Assignment min_cost_assignment(const std::vector<std::vector<double>>& cost);

}  // namespace tlane
