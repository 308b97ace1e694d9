#pragma once

#include <functional>
#include <string>

#include "daal/graph.hpp"

namespace daal::nd {

/// Builds a scalar-rooted graph from a leaf created for `x`.
using GraphFn = std::function<Var(Graph&, Var)>;

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    bool pass = false;
    std::string describe() const;
};

/// Central-difference check of backward() against a numeric gradient.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|,
/// |numeric|), so it reads as a relative error for O(1) gradients and an
/// absolute one near zero. Report-only: never throws on mismatch.
FiniteDiffReport finite_diff_check(const GraphFn& f, const Tensor& x,
                                   double eps, double tol);

/// Same check when the analytic gradient has already been computed.
FiniteDiffReport finite_diff_against(const std::function<double(const Tensor&)>& f,
                                     const Tensor& x, const Tensor& analytic,
                                     double eps, double tol);

} // namespace daal::nd
