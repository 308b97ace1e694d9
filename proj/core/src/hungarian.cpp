#include "daal/hungarian.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace daal {

std::vector<std::size_t>
min_cost_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    if (n == 0) return {};
    const std::size_t m = cost[0].size();
    if (m < n) {
        throw std::invalid_argument("min_cost_assignment: needs rows <= cols");
    }
    for (const auto& row : cost) {
        if (row.size() != m) {
            throw std::invalid_argument("min_cost_assignment: ragged matrix");
        }
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based potentials formulation; p[j] is the row assigned to column j.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
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
        } while (j0 != 0);
    }

    std::vector<std::size_t> result(n, 0);
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) result[p[j] - 1] = j - 1;
    }
    return result;
}

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<std::size_t>& cols) {
    double total = 0.0;
    for (std::size_t i = 0; i < cols.size(); ++i) total += cost[i][cols[i]];
    return total;
}

double brute_force_assignment_cost(
    const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    if (n == 0) return 0.0;
    const std::size_t m = cost[0].size();
    if (m < n) {
        throw std::invalid_argument("brute_force_assignment_cost: rows > cols");
    }
    std::vector<std::size_t> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    // Enumerate column permutations; the first n entries form the injection.
    do {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += cost[i][cols[i]];
        best = std::min(best, acc);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

} // namespace daal
