#pragma once

#include <span>

#include "daal/graph.hpp"
#include "daal/rng.hpp"
#include "daal/tensor.hpp"

namespace daal::ota {

enum class Domain { source, target };

/// Per-query decoder output vectors, one row per object query.
struct DecoderFeatures {
    nd::Tensor features; // N x d
    Domain domain = Domain::source;
};

/// K unit-norm projection directions in R^d, one per row.
class ProjectionSet {
public:
    static ProjectionSet from_matrix(nd::Tensor thetas);
    const nd::Tensor& thetas() const { return thetas_; }
    std::size_t count() const { return thetas_.extent(0); }
    std::size_t dim() const { return thetas_.extent(1); }

private:
    nd::Tensor thetas_;
};

/// K independent directions: standard-normal d-vectors normalized to unit
/// length. Deterministic given the generator state.
ProjectionSet sample_projections(std::size_t count, std::size_t dim, Rng& rng);

/// Sliced squared-Wasserstein loss between two equally sized feature sets:
/// sum over projections of sum_i (sorted src projections - sorted target
/// projections)^2. Differentiable; gradients reach both feature matrices
/// through the frozen sort permutations. No 1/K or 1/N normalization.
nd::Var sliced_w2(nd::Graph& g, nd::Var src, nd::Var tgt,
                  const ProjectionSet& proj);

/// Value-only convenience wrapper over sliced_w2.
double sliced_w2_value(const nd::Tensor& src, const nd::Tensor& tgt,
                       const ProjectionSet& proj);

/// The Eq-6 term of one projection, by the sorting route.
double per_projection_term(const nd::Tensor& src, const nd::Tensor& tgt,
                           std::span<const double> theta);

/// Exact 1D squared-Wasserstein cost: minimum over all bijections pi of
/// sum_i (a_i - b_pi(i))^2. Independent of sorting: solved by exhaustive
/// permutation search for n <= 8 and by O(n^3) assignment for n <= 16.
/// Test oracle; lengths above 16 are rejected.
double exact_1d_w2(std::span<const double> a, std::span<const double> b);

/// The two assignment routes individually, for cross-checks.
double w2_brute_force_1d(std::span<const double> a, std::span<const double> b);
double w2_assignment_1d(std::span<const double> a, std::span<const double> b);

} // namespace daal::ota
