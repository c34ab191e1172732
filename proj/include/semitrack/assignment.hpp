#pragma once

#include <vector>

#include "semitrack/matrix.hpp"

namespace semitrack {

/// Minimum-cost rectangular assignment (Kuhn-Munkres with potentials).
/// Entries equal to +infinity are forbidden. Returns, for each row, the
/// assigned column or -1.
std::vector<int> min_cost_assignment(const Matrix& cost);

}  // namespace semitrack
