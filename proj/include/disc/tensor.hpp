#pragma once

// Dense row-major f64 tensor with a recorded reverse-mode graph.
//
// A Tensor is a shared handle to a graph node. Leaves created with
// requires_grad=true are parameters: they own a gradient buffer that
// backward() accumulates into. Every op output that depends on such a leaf
// records its parents and a backward rule; backward() walks that graph once
// and then releases it.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "disc/error.hpp"

namespace disc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a gradient reaches the node
    bool requires_grad = false;
    bool leaf = true;
    bool released = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
   public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> data(numel(shape), 0.0);
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> data(numel(shape), value);
        return from(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
        if (numel(shape) != data.size()) {
            throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
        }
        auto node = std::make_shared<detail::Node>();
        node->shape = std::move(shape);
        node->value = std::move(data);
        node->requires_grad = requires_grad;
        if (requires_grad) node->grad.assign(node->value.size(), 0.0);
        return Tensor(std::move(node));
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from({}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node().shape; }
    std::size_t rank() const { return node().shape.size(); }
    std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
    std::size_t size() const { return node().value.size(); }
    bool requires_grad() const { return node().requires_grad; }
    bool is_leaf() const { return node().leaf; }

    std::span<const double> data() const { return node().value; }
    double operator[](std::size_t i) const { return node().value[i]; }
    double item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return node().value[0];
    }

    /// Writable view of a leaf's values (parameter updates, initialization).
    std::span<double> mutable_data() {
        if (!node().leaf) throw GraphError("mutable_data() on a non-leaf tensor");
        return node().value;
    }

    bool has_grad() const { return !node().grad.empty(); }
    std::span<const double> grad() const { return node().grad; }
    std::span<double> mutable_grad() { return node().grad_buffer(); }
    void zero_grad() {
        auto& g = node().grad;
        std::fill(g.begin(), g.end(), 0.0);
    }

    /// Copy of the values as a new leaf without gradient tracking.
    Tensor detach() const { return from(shape(), node().value, false); }

    Tensor reshape(Shape shape) const;

    detail::Node& node() const {
        if (!node_) throw GraphError("use of an undefined tensor");
        return *node_;
    }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

   private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

/// Builds an op output; records parents and the backward rule only when
/// grad mode is on and some input requires grad.
inline Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward_fn, const char* op) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    bool track = false;
    if (grad_mode()) {
        for (const auto& t : inputs) track = track || t.requires_grad();
    }
    if (track) {
        node->requires_grad = true;
        for (auto& t : inputs) node->parents.push_back(t.node_ptr());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

/// Populates gradients of every reachable leaf that requires grad with
/// d(loss)/d(leaf), accumulating into existing buffers. The recorded graph
/// is released afterwards; a second backward through it is an error.
inline void backward(const Tensor& loss) {
    auto& root = loss.node();
    if (root.released) throw GraphError("backward through a graph that was already released");
    if (root.value.size() != 1) {
        throw GraphError("backward() requires a scalar loss, got shape " + shape_str(root.shape));
    }
    if (!root.requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
    for (detail::Node* node : order) {
        if (node->leaf) continue;
        node->released = true;
        node->parents.clear();
        node->backward_fn = nullptr;
        node->grad.clear();
        node->grad.shrink_to_fit();
    }
}

}  // namespace disc
