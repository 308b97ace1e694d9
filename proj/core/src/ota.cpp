#include "daal/ota.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "daal/hungarian.hpp"

namespace daal::ota {

ProjectionSet ProjectionSet::from_matrix(nd::Tensor thetas) {
    if (thetas.rank() != 2 || thetas.empty()) {
        throw std::invalid_argument("ProjectionSet: expects a nonempty K x d "
                                    "matrix, got " + thetas.shape_str());
    }
    const std::size_t k = thetas.extent(0), d = thetas.extent(1);
    for (std::size_t i = 0; i < k; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double v = thetas.at2(i, j);
            sq += v * v;
        }
        if (std::fabs(std::sqrt(sq) - 1.0) > 1e-12) {
            throw std::invalid_argument(
                "ProjectionSet: row " + std::to_string(i) + " has norm " +
                std::to_string(std::sqrt(sq)) + ", want 1");
        }
    }
    ProjectionSet p;
    p.thetas_ = std::move(thetas);
    return p;
}

ProjectionSet sample_projections(std::size_t count, std::size_t dim, Rng& rng) {
    if (dim == 0) throw std::invalid_argument("sample_projections: dim == 0");
    if (count == 0) throw std::invalid_argument("sample_projections: count == 0");
    std::vector<double> data(count * dim);
    for (std::size_t i = 0; i < count; ++i) {
        double* row = data.data() + i * dim;
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                row[j] = rng.normal();
                norm += row[j] * row[j];
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-12); // a zero draw has measure zero; redraw
        for (std::size_t j = 0; j < dim; ++j) row[j] /= norm;
        // One Newton-ish renormalization pass keeps |norm - 1| under 1e-12.
        double check = 0.0;
        for (std::size_t j = 0; j < dim; ++j) check += row[j] * row[j];
        check = std::sqrt(check);
        for (std::size_t j = 0; j < dim; ++j) row[j] /= check;
    }
    return ProjectionSet::from_matrix(nd::Tensor({count, dim}, std::move(data)));
}

namespace {

void check_pair_shapes(const nd::Tensor& s, const nd::Tensor& t,
                       const ProjectionSet& proj) {
    if (s.rank() != 2 || t.rank() != 2 || s.empty() || t.empty()) {
        throw std::invalid_argument("sliced_w2: feature sets must be nonempty "
                                    "N x d matrices");
    }
    if (s.extent(0) != t.extent(0)) {
        throw std::invalid_argument(
            "sliced_w2: feature count mismatch " + std::to_string(s.extent(0)) +
            " vs " + std::to_string(t.extent(0)));
    }
    if (s.extent(1) != t.extent(1) || s.extent(1) != proj.dim()) {
        throw std::invalid_argument("sliced_w2: dimension mismatch");
    }
}

} // namespace

nd::Var sliced_w2(nd::Graph& g, nd::Var src, nd::Var tgt,
                  const ProjectionSet& proj) {
    const nd::Tensor& s = src.value();
    const nd::Tensor& t = tgt.value();
    check_pair_shapes(s, t, proj);
    const std::size_t n = s.extent(0), d = s.extent(1), k = proj.count();

    // Constant d x K matrix of projection directions (transposed once here;
    // it carries no gradient).
    std::vector<double> tdata(d * k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            tdata[j * k + i] = proj.thetas().at2(i, j);
        }
    }
    nd::Var theta_t = g.constant(nd::Tensor({d, k}, std::move(tdata)));
    nd::Var ps = g.matmul(src, theta_t); // N x K
    nd::Var pt = g.matmul(tgt, theta_t);

    nd::Var total;
    for (std::size_t i = 0; i < k; ++i) {
        nd::Var cs = g.reshape(g.gather(ps, {i}, 1), {n});
        nd::Var ct = g.reshape(g.gather(pt, {i}, 1), {n});
        nd::Var ss = g.sort_with_permutation(cs).first;
        nd::Var st = g.sort_with_permutation(ct).first;
        nd::Var term = g.sum(g.square(g.sub(ss, st)));
        total = i == 0 ? term : g.add(total, term);
    }
    return total;
}

double sliced_w2_value(const nd::Tensor& src, const nd::Tensor& tgt,
                       const ProjectionSet& proj) {
    nd::Graph g;
    return sliced_w2(g, g.constant(src), g.constant(tgt), proj).value().item();
}

double per_projection_term(const nd::Tensor& src, const nd::Tensor& tgt,
                           std::span<const double> theta) {
    if (src.rank() != 2 || tgt.rank() != 2 ||
        src.extent(1) != theta.size() || tgt.extent(1) != theta.size() ||
        src.extent(0) != tgt.extent(0)) {
        throw std::invalid_argument("per_projection_term: shape mismatch");
    }
    const std::size_t n = src.extent(0), d = theta.size();
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        double pa = 0.0, pb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            pa += src.at2(i, j) * theta[j];
            pb += tgt.at2(i, j) * theta[j];
        }
        a[i] = pa;
        b[i] = pb;
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

namespace {

std::vector<std::vector<double>> squared_diff_costs(std::span<const double> a,
                                                    std::span<const double> b) {
    std::vector<std::vector<double>> cost(a.size(),
                                          std::vector<double>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double diff = a[i] - b[j];
            cost[i][j] = diff * diff;
        }
    }
    return cost;
}

} // namespace

double w2_brute_force_1d(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("w2_brute_force_1d: length mismatch");
    }
    if (a.empty()) throw std::invalid_argument("w2_brute_force_1d: empty");
    if (a.size() > 8) {
        throw std::invalid_argument("w2_brute_force_1d: n > 8");
    }
    return brute_force_assignment_cost(squared_diff_costs(a, b));
}

double w2_assignment_1d(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("w2_assignment_1d: length mismatch");
    }
    if (a.empty()) throw std::invalid_argument("w2_assignment_1d: empty");
    const auto cost = squared_diff_costs(a, b);
    return assignment_cost(cost, min_cost_assignment(cost));
}

double exact_1d_w2(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("exact_1d_w2: length mismatch");
    }
    if (a.empty()) throw std::invalid_argument("exact_1d_w2: empty input");
    if (a.size() > 16) {
        throw std::invalid_argument("exact_1d_w2: oracle capped at n = 16");
    }
    if (a.size() <= 8) return w2_brute_force_1d(a, b);
    return w2_assignment_1d(a, b);
}

} // namespace daal::ota
