#include "semitrack/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace semitrack {

std::vector<int> min_cost_assignment(const Matrix& cost) {
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;

  // Square padding; forbidden pairs get a cost larger than any feasible total.
  const std::size_t n = std::max(rows, cols);
  double finite_max = 0.0;
  for (double v : cost.data())
    if (std::isfinite(v)) finite_max = std::max(finite_max, std::abs(v));
  const double forbidden = (finite_max + 1.0) * static_cast<double>(n + 1) * 4.0;
  auto at = [&](std::size_t i, std::size_t j) {
    if (i >= rows || j >= cols) return 0.0;
    const double v = cost(i, j);
    return std::isfinite(v) ? v : forbidden;
  };

  // 1-indexed Hungarian algorithm (e-maxx formulation).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i == 0 || i > rows || j > cols) continue;
    if (std::isfinite(cost(i - 1, j - 1))) result[i - 1] = static_cast<int>(j - 1);
  }
  return result;
}

}  // namespace semitrack
