#include "tlane/assignment.hpp"

#include "tlane/errors.hpp"

#include <cmath>

namespace tlane {

namespace {

// Kuhn-Munkres with potentials for n <= m; returns column per row (1-based internally).
std::vector<int> hungarian(const std::vector<std::vector<double>>& a, int n, int m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment min_cost_assignment(const std::vector<std::vector<double>>& cost) {
  Assignment out;
  const int rows = static_cast<int>(cost.size());
  out.row_to_col.assign(rows, -1);
  if (rows == 0) return out;
  const int cols = static_cast<int>(cost.front().size());
  for (const auto& r : cost) {
    if (static_cast<int>(r.size()) != cols) throw ValidationError("assignment: ragged cost matrix");
  }
  if (cols == 0) return out;

  // Forbidden pairs get a penalty larger than any difference of admissible totals.
  double magnitude = 0.0;
  for (const auto& r : cost) {
    for (double c : r) {
      if (std::isnan(c)) throw ValidationError("assignment: NaN cost");
      if (c != kForbidden) magnitude += std::abs(c);
    }
  }
  const double penalty = 2.0 * magnitude + 1.0;

  const bool transpose = rows > cols;
  const int n = transpose ? cols : rows;
  const int m = transpose ? rows : cols;
  std::vector<std::vector<double>> a(n, std::vector<double>(m));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double c = cost[i][j] == kForbidden ? penalty : cost[i][j];
      if (transpose) {
        a[j][i] = c;
      } else {
        a[i][j] = c;
      }
    }
  }
  const std::vector<int> sol = hungarian(a, n, m);
  for (int i = 0; i < n; ++i) {
    const int j = sol[i];
    if (j < 0) continue;
    const int r = transpose ? j : i;
    const int c = transpose ? i : j;
    if (cost[r][c] == kForbidden) continue;
    out.row_to_col[r] = c;
    out.matched += 1;
    out.total_cost += cost[r][c];
  }
  return out;
}

}  // namespace tlane
