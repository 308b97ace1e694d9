#pragma once

#include <cstddef>
#include <vector>

namespace daal {

/// Minimum-cost assignment of rows to distinct columns (Kuhn-Munkres with
/// potentials, O(n^2 m)). Requires rows <= cols. Returns the matched column
/// for each row; the assignment is exactly optimal.
std::vector<std::size_t>
min_cost_assignment(const std::vector<std::vector<double>>& cost);

/// Total cost of an assignment under a cost matrix.
double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<std::size_t>& cols);

/// Exhaustive minimum over all row->column injections. Intended for tests
/// and small oracles only (rows <= 8 or so).
double brute_force_assignment_cost(const std::vector<std::vector<double>>& cost);

} // namespace daal
