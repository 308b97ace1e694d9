#include "daal/grad_check.hpp"

#include <cmath>
#include <sstream>

namespace daal::nd {

std::string FiniteDiffReport::describe() const {
    std::ostringstream os;
    os << (pass ? "pass" : "FAIL") << " max_rel_err=" << max_rel_err
       << " at index " << worst_index << " (analytic=" << analytic_at_worst
       << ", numeric=" << numeric_at_worst << ")";
    return os.str();
}

FiniteDiffReport finite_diff_against(
    const std::function<double(const Tensor&)>& f, const Tensor& x,
    const Tensor& analytic, double eps, double tol) {
    FiniteDiffReport rep;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double fp = f(probe);
        probe[i] = orig - eps;
        const double fm = f(probe);
        probe[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic.numel() ? analytic[i] : 0.0;
        const double denom =
            std::max({1.0, std::fabs(a), std::fabs(numeric)});
        const double err = std::fabs(a - numeric) / denom;
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_index = i;
            rep.analytic_at_worst = a;
            rep.numeric_at_worst = numeric;
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

FiniteDiffReport finite_diff_check(const GraphFn& f, const Tensor& x,
                                   double eps, double tol) {
    Tensor x0 = x;
    x0.set_requires_grad(true);
    Graph g;
    Var leaf = g.leaf(x0);
    Var root = f(g, leaf);
    GradientMap grads = g.backward(root);
    const Tensor* analytic = grads.find(leaf);
    Tensor analytic_t = analytic ? *analytic : Tensor::zeros(x.shape());

    auto eval = [&](const Tensor& probe) {
        Graph h;
        Var l = h.leaf(probe);
        return f(h, l).value().item();
    };
    return finite_diff_against(eval, x, analytic_t, eps, tol);
}

} // namespace daal::nd
