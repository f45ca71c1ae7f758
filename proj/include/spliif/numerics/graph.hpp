#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spliif/error.hpp"
#include "spliif/numerics/tensor.hpp"

namespace spliif {

/// Handle to a node in a Graph.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;

    bool valid() const noexcept { return id != npos; }
    friend bool operator==(Var a, Var b) noexcept { return a.id == b.id; }
    friend bool operator<(Var a, Var b) noexcept { return a.id < b.id; }
};

/// Define-by-run tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so insertion order is a topological
/// order and backward() simply walks the tape in reverse. A graph (and all the
/// tensors it owns) belongs to a single thread.
template <class T>
class Graph {
public:
    /// Receives the gradient of the node's output; accumulates into its inputs.
    using BackwardFn = std::function<void(Graph&, const Tensor<T>&)>;

    explicit Graph(bool check_finite = false) : check_finite_(check_finite) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) noexcept = default;
    Graph& operator=(Graph&&) noexcept = default;

    Var leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
        Node node;
        node.value = std::move(value);
        node.requires_grad = requires_grad;
        node.is_leaf = true;
        node.op = name.empty() ? std::string("leaf") : std::move(name);
        nodes_.push_back(std::move(node));
        return Var{nodes_.size() - 1};
    }

    Var constant(Tensor<T> value) { return leaf(std::move(value), false, "constant"); }

    /// Append an operation result. The backward closure is kept only when some
    /// input participates in differentiation.
    Var record(const char* op, Tensor<T> out, std::initializer_list<Var> inputs, BackwardFn fn) {
        return record(op, std::move(out), std::vector<Var>(inputs), std::move(fn));
    }

    Var record(const char* op, Tensor<T> out, const std::vector<Var>& inputs, BackwardFn fn) {
        if (check_finite_ && !out.all_finite()) {
            throw NonFiniteError(std::string("non-finite value produced by ") + op + " (node " +
                                 std::to_string(nodes_.size()) + ")");
        }
        Node node;
        node.value = std::move(out);
        node.op = op;
        for (const Var v : inputs) {
            if (v.id >= nodes_.size()) throw ContractError(std::string(op) + ": dangling input");
            node.inputs.push_back(v.id);
            node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
        }
        if (node.requires_grad) node.backward = std::move(fn);
        nodes_.push_back(std::move(node));
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    bool is_leaf(Var v) const { return nodes_.at(v.id).is_leaf; }
    const std::string& op(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool check_finite() const noexcept { return check_finite_; }

    /// Gradient buffer of v, zero-initialised on first access.
    Tensor<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
        return n.grad;
    }

    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates in exact reverse insertion order.
    void run_backward(Var loss) {
        const Node& root = nodes_.at(loss.id);
        if (root.value.size() != 1) {
            throw ContractError("backward requires a scalar loss, got shape " +
                                to_string(root.value.shape()));
        }
        grad(loss)[0] = T(1);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            n.backward(*this, n.grad);
        }
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad = false;
        bool is_leaf = false;
        std::string op;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool check_finite_ = false;
};

/// Runs reverse-mode differentiation from `loss` and returns the gradient of
/// every leaf that was created with requires_grad. Non-flagged leaves are skipped.
template <class T>
std::map<Var, Tensor<T>> backward(Graph<T>& graph, Var loss) {
    graph.run_backward(loss);
    std::map<Var, Tensor<T>> out;
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const Var v{i};
        if (!graph.is_leaf(v) || !graph.requires_grad(v)) continue;
        out.emplace(v, graph.grad(v));
    }
    return out;
}

} // namespace spliif
