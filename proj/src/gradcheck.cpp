#include "tlane/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tlane::ad {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport compare_gradients(const Program& program, const std::vector<NamedInput>& inputs,
                                  const std::vector<Matrix>& analytic, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  if (analytic.size() != inputs.size()) throw std::invalid_argument("one gradient per input expected");

  std::vector<Matrix> values;
  values.reserve(inputs.size());
  for (const NamedInput& in : inputs) values.push_back(in.value);

  GradCheckReport report;
  report.step = step;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double worst = 0.0;
    Matrix& x = values[k];
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) {
        const double saved = x(i, j);
        x(i, j) = saved + step;
        const double up = evaluate(program, values);
        x(i, j) = saved - step;
        const double down = evaluate(program, values);
        x(i, j) = saved;
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, relative_error(analytic[k](i, j), numeric));
      }
    }
    report.per_parameter[inputs[k].name] = worst;
    if (k == 0 || worst > report.max_relative_error) {
      report.max_relative_error = worst;
      report.worst_parameter = inputs[k].name;
    }
  }
  return report;
}

GradCheckReport finite_difference_check(const Program& program, const std::vector<NamedInput>& inputs,
                                        double step) {
  std::vector<Matrix> values;
  values.reserve(inputs.size());
  for (const NamedInput& in : inputs) values.push_back(in.value);
  const Evaluation e = evaluate_with_gradients(program, std::span<const Matrix>(values));
  return compare_gradients(program, inputs, e.gradients, step);
}

}  // namespace tlane::ad
