#pragma once

#include "tlane/ad.hpp"

#include <map>
#include <string>
#include <vector>

namespace tlane::ad {

struct NamedInput {
  std::string name;
  Matrix value;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  /// Worst error per input array, keyed by input name.
  std::map<std::string, double> per_parameter;
  double step = 0.0;
  std::string worst_parameter;
};

/// Compares reverse-mode gradients against central differences.
/// Error per entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Results are unreliable when an input sits within 2*step of a kink of
/// relu/abs or a branch point; that is the caller's responsibility.
GradCheckReport finite_difference_check(const Program& program, const std::vector<NamedInput>& inputs,
                                        double step = 1e-5);

/// Same comparison against externally supplied analytic gradients.
GradCheckReport compare_gradients(const Program& program, const std::vector<NamedInput>& inputs,
                                  const std::vector<Matrix>& analytic, double step = 1e-5);

double relative_error(double analytic, double numeric);

}  // namespace tlane::ad
