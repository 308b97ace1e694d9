#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daal/tensor.hpp"

namespace daal::nd {

enum class OpKind {
    leaf,
    add,
    sub,
    mul,
    div,
    scalar_mul,
    matmul,
    relu,
    sigmoid,
    softmax, // last axis
    log,
    square,
    sum,
    mean,
    reshape,
    concat,
    gather,
    sort_with_permutation,
    grad_reverse,
};

const char* op_kind_name(OpKind kind);

/// Permutation frozen at sort time: output[i] = input[perm[i]], values
/// nondecreasing, ties broken by original index.
struct SortPermutation {
    std::vector<std::size_t> perm;
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; invalidated when the graph
/// is destroyed or cleared.
class Var {
public:
    Var() = default;
    bool valid() const { return graph_ != nullptr; }
    std::size_t id() const { return id_; }
    Graph* graph() const { return graph_; }
    const Tensor& value() const;

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients keyed by node id, as produced by Graph::backward.
class GradientMap {
public:
    const Tensor* find(const Var& v) const;
    const Tensor& at(const Var& v) const;
    bool contains(const Var& v) const { return find(v) != nullptr; }
    std::size_t size() const { return grads_.size(); }

private:
    friend class Graph;
    std::unordered_map<std::size_t, Tensor> grads_;
};

/// Append-only tape of operations. Node inputs always precede the node, so
/// creation order is a topological order and backward makes a single
/// reverse sweep, visiting each reachable node exactly once.
///
/// Every forward result is checked for NaN/Inf; a non-finite value raises
/// instead of propagating silently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    /// Tensors enter the graph as leaves; requires_grad marks parameters.
    Var leaf(Tensor t);
    /// Leaf with requires_grad forced off.
    Var constant(Tensor t);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scalar_mul(Var a, double factor);
    Var matmul(Var a, Var b);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmax(Var a); // over the last axis
    Var log(Var a);
    Var square(Var a);
    Var sum(Var a);
    Var mean(Var a);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var concat(const std::vector<Var>& xs, std::size_t axis);
    /// Select slices along `axis` (0 or 1; axis 0 on rank-1 selects
    /// elements). Duplicate indices accumulate in the gradient.
    Var gather(Var a, std::vector<std::size_t> indices, std::size_t axis = 0);
    /// Ascending stable sort of a rank-1 tensor. The returned permutation is
    /// frozen into the node; the gradient is scattered through it.
    std::pair<Var, SortPermutation> sort_with_permutation(Var a);
    /// Identity forward; backward multiplies the upstream gradient by
    /// -factor.
    Var grad_reverse(Var a, double factor = 1.0);

    const Tensor& value(const Var& v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Reverse-mode sweep from a scalar root. Returns dRoot/dLeaf for every
    /// leaf with requires_grad reachable from the root.
    GradientMap backward(const Var& root) const;

    /// Walks every node, exposing its kind and input values. Used by
    /// verification code to measure distances to relu/sort kinks.
    void visit_nodes(
        const std::function<void(OpKind, const std::vector<const Tensor*>&,
                                 const Tensor&)>& fn) const;

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        Tensor value;
        std::vector<std::size_t> inputs;
        bool needs_grad = false;
        // Saved forward context, op-dependent.
        std::vector<std::size_t> aux;    // sort perm / gather idx / concat offsets
        std::vector<std::size_t> shape0; // input shape for reshape/gather
        std::size_t axis = 0;
        double factor = 0.0;
    };

    Var push(Node node);
    const Node& node(const Var& v) const;
    void check_same_graph(const Var& v, const char* op) const;
    void check_shapes_match(const Var& a, const Var& b, const char* op) const;

    std::vector<Node> nodes_;
};

// Convenience helpers used across the library.

/// 1 - x, elementwise (x subtracted from a ones tensor of the same shape).
Var one_minus(Graph& g, Var x);
/// x + c, elementwise with a constant scalar.
Var add_const(Graph& g, Var x, double c);
/// rows * 1 matrix of ones times a 1 x cols bias row: broadcast-free bias add.
Var add_bias_row(Graph& g, Var x, Var bias_row);

} // namespace daal::nd
