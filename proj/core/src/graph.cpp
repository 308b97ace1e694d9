#include "daal/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace daal::nd {

namespace {

void matmul_plain(const double* a, std::size_t m, std::size_t k,
                  const double* b, std::size_t n, double* out) {
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            double* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m x k] = c[m x n] * b[k x n]^T
void matmul_bt(const double* c, std::size_t m, std::size_t n,
               const double* b, std::size_t k, double* out) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += crow[j] * brow[j];
            out[i * k + p] += acc;
        }
    }
}

// out[k x n] += a[m x k]^T * c[m x n]
void matmul_at(const double* a, std::size_t m, std::size_t k,
               const double* c, std::size_t n, double* out) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * crow[j];
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

const char* op_kind_name(OpKind kind) {
    switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::reshape: return "reshape";
    case OpKind::concat: return "concat";
    case OpKind::gather: return "gather";
    case OpKind::sort_with_permutation: return "sort_with_permutation";
    case OpKind::grad_reverse: return "grad_reverse";
    }
    return "?";
}

const Tensor& Var::value() const {
    if (!graph_) throw std::invalid_argument("Var::value: empty handle");
    return graph_->value(*this);
}

const Tensor* GradientMap::find(const Var& v) const {
    auto it = grads_.find(v.id());
    return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& GradientMap::at(const Var& v) const {
    const Tensor* t = find(v);
    if (!t) {
        throw std::invalid_argument("GradientMap::at: node " +
                                    std::to_string(v.id()) +
                                    " has no gradient");
    }
    return *t;
}

Var Graph::push(Node node) {
    // Inputs must already exist on the tape, which keeps it acyclic.
    for (std::size_t in : node.inputs) {
        if (in >= nodes_.size()) {
            throw std::invalid_argument("Graph: cycle or dangling input "
                                        "detected while adding " +
                                        std::string(op_kind_name(node.kind)));
        }
    }
    if (!node.value.all_finite()) {
        throw std::runtime_error(std::string("Graph: non-finite value out of ") +
                                 op_kind_name(node.kind));
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

const Graph::Node& Graph::node(const Var& v) const {
    if (v.graph() != this || v.id() >= nodes_.size()) {
        throw std::invalid_argument("Graph: Var belongs to another graph");
    }
    return nodes_[v.id()];
}

void Graph::check_same_graph(const Var& v, const char* op) const {
    if (v.graph() != this) {
        throw std::invalid_argument(std::string(op) +
                                    ": input from another graph");
    }
}

void Graph::check_shapes_match(const Var& a, const Var& b,
                               const char* op) const {
    if (!node(a).value.same_shape(node(b).value)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    node(a).value.shape_str() + " vs " +
                                    node(b).value.shape_str());
    }
}

Var Graph::leaf(Tensor t) {
    Node n;
    n.kind = OpKind::leaf;
    n.needs_grad = t.requires_grad();
    n.value = std::move(t);
    return push(std::move(n));
}

Var Graph::constant(Tensor t) {
    t.set_requires_grad(false);
    return leaf(std::move(t));
}

Var Graph::add(Var a, Var b) {
    check_same_graph(a, "add");
    check_same_graph(b, "add");
    check_shapes_match(a, b, "add");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.empty()) throw std::invalid_argument("add: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
    Node n;
    n.kind = OpKind::add;
    n.inputs = {a.id(), b.id()};
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
    check_same_graph(a, "sub");
    check_same_graph(b, "sub");
    check_shapes_match(a, b, "sub");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.empty()) throw std::invalid_argument("sub: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
    Node n;
    n.kind = OpKind::sub;
    n.inputs = {a.id(), b.id()};
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
    check_same_graph(a, "mul");
    check_same_graph(b, "mul");
    check_shapes_match(a, b, "mul");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.empty()) throw std::invalid_argument("mul: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
    Node n;
    n.kind = OpKind::mul;
    n.inputs = {a.id(), b.id()};
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::div(Var a, Var b) {
    check_same_graph(a, "div");
    check_same_graph(b, "div");
    check_shapes_match(a, b, "div");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.empty()) throw std::invalid_argument("div: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (tb[i] == 0.0) throw std::invalid_argument("div: zero denominator");
        out[i] = ta[i] / tb[i];
    }
    Node n;
    n.kind = OpKind::div;
    n.inputs = {a.id(), b.id()};
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::scalar_mul(Var a, double factor) {
    check_same_graph(a, "scalar_mul");
    if (!std::isfinite(factor)) {
        throw std::invalid_argument("scalar_mul: non-finite factor");
    }
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("scalar_mul: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * factor;
    Node n;
    n.kind = OpKind::scalar_mul;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.factor = factor;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
    check_same_graph(a, "matmul");
    check_same_graph(b, "matmul");
    const Tensor& ta = node(a).value;
    const Tensor& tb = node(b).value;
    if (ta.rank() != 2 || tb.rank() != 2) {
        throw std::invalid_argument("matmul: expects rank-2 inputs, got " +
                                    ta.shape_str() + " and " + tb.shape_str());
    }
    if (ta.extent(1) != tb.extent(0)) {
        throw std::invalid_argument("matmul: inner extent mismatch " +
                                    ta.shape_str() + " x " + tb.shape_str());
    }
    if (ta.empty() || tb.empty()) {
        throw std::invalid_argument("matmul: empty tensor");
    }
    const std::size_t m = ta.extent(0), k = ta.extent(1), nn = tb.extent(1);
    std::vector<double> out(m * nn);
    matmul_plain(ta.raw(), m, k, tb.raw(), nn, out.data());
    Node n;
    n.kind = OpKind::matmul;
    n.inputs = {a.id(), b.id()};
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor({m, nn}, std::move(out));
    return push(std::move(n));
}

Var Graph::relu(Var a) {
    check_same_graph(a, "relu");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("relu: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
    Node n;
    n.kind = OpKind::relu;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::sigmoid(Var a) {
    check_same_graph(a, "sigmoid");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("sigmoid: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(ta[i]);
    Node n;
    n.kind = OpKind::sigmoid;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::softmax(Var a) {
    check_same_graph(a, "softmax");
    const Tensor& ta = node(a).value;
    if (ta.empty() || ta.rank() == 0) {
        throw std::invalid_argument("softmax: needs a nonempty tensor with "
                                    "rank >= 1");
    }
    const std::size_t inner = ta.extent(ta.rank() - 1);
    const std::size_t rows = ta.numel() / inner;
    std::vector<double> out(ta.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = ta.raw() + r * inner;
        double* y = out.data() + r * inner;
        double mx = x[0];
        for (std::size_t j = 1; j < inner; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < inner; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < inner; ++j) y[j] /= z;
    }
    Node n;
    n.kind = OpKind::softmax;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::log(Var a) {
    check_same_graph(a, "log");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("log: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (ta[i] <= 0.0) {
            throw std::invalid_argument("log: non-positive value " +
                                        std::to_string(ta[i]));
        }
        out[i] = std::log(ta[i]);
    }
    Node n;
    n.kind = OpKind::log;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::square(Var a) {
    check_same_graph(a, "square");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("square: empty tensor");
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * ta[i];
    Node n;
    n.kind = OpKind::square;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(ta.shape(), std::move(out));
    return push(std::move(n));
}

Var Graph::sum(Var a) {
    check_same_graph(a, "sum");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("sum: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.numel(); ++i) acc += ta[i];
    Node n;
    n.kind = OpKind::sum;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Var Graph::mean(Var a) {
    check_same_graph(a, "mean");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("mean: empty tensor");
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.numel(); ++i) acc += ta[i];
    Node n;
    n.kind = OpKind::mean;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.factor = 1.0 / static_cast<double>(ta.numel());
    n.value = Tensor::scalar(acc * n.factor);
    return push(std::move(n));
}

Var Graph::reshape(Var a, std::vector<std::size_t> shape) {
    check_same_graph(a, "reshape");
    const Tensor& ta = node(a).value;
    if (shape_numel(shape) != ta.numel()) {
        throw std::invalid_argument("reshape: " + ta.shape_str() + " to " +
                                    shape_to_string(shape) +
                                    " changes element count");
    }
    Node n;
    n.kind = OpKind::reshape;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.shape0 = ta.shape();
    n.value = Tensor(std::move(shape),
                     std::vector<double>(ta.data().begin(), ta.data().end()));
    return push(std::move(n));
}

Var Graph::concat(const std::vector<Var>& xs, std::size_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    for (const Var& v : xs) check_same_graph(v, "concat");
    const Tensor& first = node(xs[0]).value;
    const std::size_t rank = first.rank();
    if (axis >= rank) {
        throw std::invalid_argument("concat: axis " + std::to_string(axis) +
                                    " out of rank " + std::to_string(rank));
    }
    std::size_t total_axis = 0;
    for (const Var& v : xs) {
        const Tensor& t = node(v).value;
        if (t.rank() != rank) {
            throw std::invalid_argument("concat: rank mismatch");
        }
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && t.extent(d) != first.extent(d)) {
                throw std::invalid_argument("concat: extent mismatch at axis " +
                                            std::to_string(d));
            }
        }
        total_axis += t.extent(axis);
    }
    std::vector<std::size_t> out_shape = first.shape();
    out_shape[axis] = total_axis;

    std::size_t outer = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first.extent(d);
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= first.extent(d);

    std::vector<double> out(shape_numel(out_shape));
    std::size_t dest_axis_off = 0;
    Node n;
    n.kind = OpKind::concat;
    n.needs_grad = false;
    n.axis = axis;
    for (const Var& v : xs) {
        const Tensor& t = node(v).value;
        const std::size_t ax = t.extent(axis);
        for (std::size_t o = 0; o < outer; ++o) {
            const double* srcp = t.raw() + o * ax * inner;
            double* dstp = out.data() + (o * total_axis + dest_axis_off) * inner;
            std::copy(srcp, srcp + ax * inner, dstp);
        }
        n.inputs.push_back(v.id());
        n.aux.push_back(ax); // per-input extent along the concat axis
        n.needs_grad = n.needs_grad || node(v).needs_grad;
        dest_axis_off += ax;
    }
    n.value = Tensor(std::move(out_shape), std::move(out));
    return push(std::move(n));
}

Var Graph::gather(Var a, std::vector<std::size_t> indices, std::size_t axis) {
    check_same_graph(a, "gather");
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("gather: empty tensor");
    if (indices.empty()) throw std::invalid_argument("gather: no indices");
    if (axis > 1 || axis >= ta.rank()) {
        throw std::invalid_argument("gather: axis " + std::to_string(axis) +
                                    " unsupported for rank " +
                                    std::to_string(ta.rank()));
    }
    for (std::size_t idx : indices) {
        if (idx >= ta.extent(axis)) {
            throw std::invalid_argument("gather: index " + std::to_string(idx) +
                                        " out of extent " +
                                        std::to_string(ta.extent(axis)));
        }
    }
    Node n;
    n.kind = OpKind::gather;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.axis = axis;
    n.shape0 = ta.shape();
    if (axis == 0) {
        const std::size_t row = ta.numel() / ta.extent(0);
        std::vector<double> out(indices.size() * row);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const double* src = ta.raw() + indices[i] * row;
            std::copy(src, src + row, out.data() + i * row);
        }
        std::vector<std::size_t> shape = ta.shape();
        shape[0] = indices.size();
        n.value = Tensor(std::move(shape), std::move(out));
    } else {
        if (ta.rank() != 2) {
            throw std::invalid_argument("gather: axis 1 requires rank-2");
        }
        const std::size_t rows = ta.extent(0), cols = ta.extent(1);
        std::vector<double> out(rows * indices.size());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < indices.size(); ++i) {
                out[r * indices.size() + i] = ta.raw()[r * cols + indices[i]];
            }
        }
        n.value = Tensor({rows, indices.size()}, std::move(out));
    }
    n.aux = std::move(indices);
    return push(std::move(n));
}

std::pair<Var, SortPermutation> Graph::sort_with_permutation(Var a) {
    check_same_graph(a, "sort_with_permutation");
    const Tensor& ta = node(a).value;
    if (ta.rank() != 1) {
        throw std::invalid_argument("sort_with_permutation: expects rank-1, "
                                    "got " + ta.shape_str());
    }
    if (ta.empty()) {
        throw std::invalid_argument("sort_with_permutation: empty tensor");
    }
    std::vector<std::size_t> perm(ta.numel());
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t i, std::size_t j) {
        return ta[i] < ta[j];
    });
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[perm[i]];
    Node n;
    n.kind = OpKind::sort_with_permutation;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.aux = perm;
    n.value = Tensor(ta.shape(), std::move(out));
    Var v = push(std::move(n));
    return {v, SortPermutation{std::move(perm)}};
}

Var Graph::grad_reverse(Var a, double factor) {
    check_same_graph(a, "grad_reverse");
    if (!std::isfinite(factor)) {
        throw std::invalid_argument("grad_reverse: non-finite factor");
    }
    const Tensor& ta = node(a).value;
    if (ta.empty()) throw std::invalid_argument("grad_reverse: empty tensor");
    Node n;
    n.kind = OpKind::grad_reverse;
    n.inputs = {a.id()};
    n.needs_grad = node(a).needs_grad;
    n.factor = factor;
    n.value = ta;
    n.value.set_requires_grad(false);
    return push(std::move(n));
}

const Tensor& Graph::value(const Var& v) const { return node(v).value; }

GradientMap Graph::backward(const Var& root) const {
    const Node& r = node(root);
    if (r.value.numel() != 1) {
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    r.value.shape_str());
    }
    // Mark nodes reachable from the root. Creation order is topological, so
    // a single reverse pass over [0, root] visits each node exactly once
    // with its upstream gradient complete.
    std::vector<char> reach(root.id() + 1, 0);
    reach[root.id()] = 1;
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        if (!reach[id]) continue;
        for (std::size_t in : nodes_[id].inputs) reach[in] = 1;
    }

    std::vector<Tensor> grads(root.id() + 1);
    grads[root.id()] = Tensor(r.value.shape(), {1.0});

    auto ensure = [&](std::size_t id) -> Tensor& {
        if (grads[id].numel() == 0 && nodes_[id].value.numel() != 0) {
            grads[id] = Tensor::zeros(nodes_[id].value.shape());
        }
        return grads[id];
    };

    for (std::size_t id = root.id() + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!reach[id] || !n.needs_grad) continue;
        if (grads[id].numel() == 0) continue; // no gradient reached this node
        const Tensor& up = grads[id];
        switch (n.kind) {
        case OpKind::leaf:
            break;
        case OpKind::add: {
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i];
            }
            if (nodes_[n.inputs[1]].needs_grad) {
                Tensor& g = ensure(n.inputs[1]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i];
            }
            break;
        }
        case OpKind::sub: {
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i];
            }
            if (nodes_[n.inputs[1]].needs_grad) {
                Tensor& g = ensure(n.inputs[1]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] -= up[i];
            }
            break;
        }
        case OpKind::mul: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            const Tensor& b = nodes_[n.inputs[1]].value;
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i] * b[i];
            }
            if (nodes_[n.inputs[1]].needs_grad) {
                Tensor& g = ensure(n.inputs[1]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i] * a[i];
            }
            break;
        }
        case OpKind::div: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            const Tensor& b = nodes_[n.inputs[1]].value;
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i] / b[i];
            }
            if (nodes_[n.inputs[1]].needs_grad) {
                Tensor& g = ensure(n.inputs[1]);
                for (std::size_t i = 0; i < up.numel(); ++i) {
                    g[i] -= up[i] * a[i] / (b[i] * b[i]);
                }
            }
            break;
        }
        case OpKind::scalar_mul: {
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                for (std::size_t i = 0; i < up.numel(); ++i) {
                    g[i] += up[i] * n.factor;
                }
            }
            break;
        }
        case OpKind::matmul: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            const Tensor& b = nodes_[n.inputs[1]].value;
            const std::size_t m = a.extent(0), k = a.extent(1),
                              nn = b.extent(1);
            if (nodes_[n.inputs[0]].needs_grad) {
                Tensor& g = ensure(n.inputs[0]);
                matmul_bt(up.raw(), m, nn, b.raw(), k, g.raw());
            }
            if (nodes_[n.inputs[1]].needs_grad) {
                Tensor& g = ensure(n.inputs[1]);
                matmul_at(a.raw(), m, k, up.raw(), nn, g.raw());
            }
            break;
        }
        case OpKind::relu: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) {
                if (a[i] > 0.0) g[i] += up[i];
            }
            break;
        }
        case OpKind::sigmoid: {
            const Tensor& y = n.value;
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) {
                g[i] += up[i] * y[i] * (1.0 - y[i]);
            }
            break;
        }
        case OpKind::softmax: {
            const Tensor& y = n.value;
            Tensor& g = ensure(n.inputs[0]);
            const std::size_t inner = y.extent(y.rank() - 1);
            const std::size_t rows = y.numel() / inner;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* yp = y.raw() + r * inner;
                const double* upp = up.raw() + r * inner;
                double dot = 0.0;
                for (std::size_t j = 0; j < inner; ++j) dot += upp[j] * yp[j];
                double* gp = g.raw() + r * inner;
                for (std::size_t j = 0; j < inner; ++j) {
                    gp[j] += yp[j] * (upp[j] - dot);
                }
            }
            break;
        }
        case OpKind::log: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i] / a[i];
            break;
        }
        case OpKind::square: {
            const Tensor& a = nodes_[n.inputs[0]].value;
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) {
                g[i] += up[i] * 2.0 * a[i];
            }
            break;
        }
        case OpKind::sum: {
            Tensor& g = ensure(n.inputs[0]);
            const double u = up[0];
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += u;
            break;
        }
        case OpKind::mean: {
            Tensor& g = ensure(n.inputs[0]);
            const double u = up[0] * n.factor;
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += u;
            break;
        }
        case OpKind::reshape: {
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) g[i] += up[i];
            break;
        }
        case OpKind::concat: {
            std::size_t rank = n.value.rank();
            std::size_t outer = 1;
            for (std::size_t d = 0; d < n.axis; ++d) {
                outer *= n.value.extent(d);
            }
            std::size_t inner = 1;
            for (std::size_t d = n.axis + 1; d < rank; ++d) {
                inner *= n.value.extent(d);
            }
            const std::size_t total_axis = n.value.extent(n.axis);
            std::size_t axis_off = 0;
            for (std::size_t xi = 0; xi < n.inputs.size(); ++xi) {
                const std::size_t ax = n.aux[xi];
                if (nodes_[n.inputs[xi]].needs_grad) {
                    Tensor& g = ensure(n.inputs[xi]);
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* upp =
                            up.raw() + (o * total_axis + axis_off) * inner;
                        double* gp = g.raw() + o * ax * inner;
                        for (std::size_t i = 0; i < ax * inner; ++i) {
                            gp[i] += upp[i];
                        }
                    }
                }
                axis_off += ax;
            }
            break;
        }
        case OpKind::gather: {
            Tensor& g = ensure(n.inputs[0]);
            if (n.axis == 0) {
                const std::size_t row = g.numel() / g.extent(0);
                for (std::size_t i = 0; i < n.aux.size(); ++i) {
                    const double* upp = up.raw() + i * row;
                    double* gp = g.raw() + n.aux[i] * row;
                    for (std::size_t j = 0; j < row; ++j) gp[j] += upp[j];
                }
            } else {
                const std::size_t rows = g.extent(0), cols = g.extent(1);
                const std::size_t k = n.aux.size();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t i = 0; i < k; ++i) {
                        g.raw()[r * cols + n.aux[i]] += up.raw()[r * k + i];
                    }
                }
            }
            break;
        }
        case OpKind::sort_with_permutation: {
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) {
                g[n.aux[i]] += up[i];
            }
            break;
        }
        case OpKind::grad_reverse: {
            Tensor& g = ensure(n.inputs[0]);
            for (std::size_t i = 0; i < up.numel(); ++i) {
                g[i] -= n.factor * up[i];
            }
            break;
        }
        }
    }

    GradientMap out;
    for (std::size_t id = 0; id <= root.id(); ++id) {
        const Node& n = nodes_[id];
        if (n.kind == OpKind::leaf && n.value.requires_grad() &&
            grads[id].numel() != 0) {
            out.grads_.emplace(id, std::move(grads[id]));
        }
    }
    return out;
}

void Graph::visit_nodes(
    const std::function<void(OpKind, const std::vector<const Tensor*>&,
                             const Tensor&)>& fn) const {
    std::vector<const Tensor*> ins;
    for (const Node& n : nodes_) {
        ins.clear();
        for (std::size_t in : n.inputs) ins.push_back(&nodes_[in].value);
        fn(n.kind, ins, n.value);
    }
}

Var one_minus(Graph& g, Var x) {
    Tensor ones = Tensor::full(x.value().shape(), 1.0);
    return g.sub(g.constant(std::move(ones)), x);
}

Var add_const(Graph& g, Var x, double c) {
    Tensor t = Tensor::full(x.value().shape(), c);
    return g.add(x, g.constant(std::move(t)));
}

Var add_bias_row(Graph& g, Var x, Var bias_row) {
    const Tensor& tx = x.value();
    const Tensor& tb = bias_row.value();
    if (tx.rank() != 2 || tb.rank() != 2 || tb.extent(0) != 1 ||
        tb.extent(1) != tx.extent(1)) {
        throw std::invalid_argument("add_bias_row: want [n,c] and [1,c], got " +
                                    tx.shape_str() + " and " + tb.shape_str());
    }
    Var ones = g.constant(Tensor::full({tx.extent(0), 1}, 1.0));
    return g.add(x, g.matmul(ones, bias_row));
}

} // namespace daal::nd
