#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nartsp/array.hpp"

namespace nartsp {

/// One vertex of the computation graph. Non-leaf nodes own references to
/// their parents and a rule that pushes the output gradient back to them.
template <typename T>
struct Node {
    Array<T> value;
    Array<T> grad;  // empty until a gradient reaches this node
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    /// Gradient buffer, zero-initialized on first use.
    Array<T>& grad_buffer() {
        if (grad.empty() && !value.empty()) grad = Array<T>(value.shape(), T{0});
        if (grad.shape() != value.shape()) grad = Array<T>(value.shape(), T{0});
        return grad;
    }
};

/// Handle onto a graph node. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    /// Constant (no gradient tracking).
    static Var constant(Array<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    /// Leaf whose gradient is tracked.
    static Var leaf(Array<T> value) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    bool valid() const noexcept { return static_cast<bool>(node_); }
    const Array<T>& value() const { return node_->value; }
    Array<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Gradient accumulated so far (zero array when nothing has flowed in).
    const Array<T>& grad() const { return node_->grad_buffer(); }
    void zero_grad() const {
        if (!node_->grad.empty()) node_->grad.fill(T{0});
    }

    Node<T>* node() const noexcept { return node_.get(); }
    const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Global switch for graph recording. Disabled inside a NoGradGuard.
bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. When recording is on and any parent tracks
/// gradients, the node keeps its parents and backward rule.
template <typename T>
Var<T> make_result(Array<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool track = false;
    if (grad_enabled()) {
        for (const auto& p : parents) track = track || (p && p->requires_grad);
    }
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Var<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar. Gradients accumulate into leaves and
/// are not cleared between calls.
template <typename T>
void backward(const Var<T>& loss);

/// A named trainable tensor. The underlying leaf persists across forward
/// passes so gradients accumulate until zero_grad().
template <typename T>
class Parameter {
public:
    Parameter() = default;
    Parameter(std::string name, Array<T> value) : name_(std::move(name)), var_(Var<T>::leaf(std::move(value))) {}

    // Copies are deep: the copy gets its own leaf so the two never share storage.
    Parameter(const Parameter& other) : name_(other.name_) {
        if (other.var_.valid()) {
            var_ = Var<T>::leaf(other.var_.value());
            var_.node()->grad = other.var_.node()->grad;
        }
    }
    Parameter& operator=(const Parameter& other) {
        if (this != &other) {
            Parameter tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    Parameter(Parameter&&) noexcept = default;
    Parameter& operator=(Parameter&&) noexcept = default;

    const std::string& name() const noexcept { return name_; }
    const Var<T>& var() const noexcept { return var_; }
    const Array<T>& value() const { return var_.value(); }
    Array<T>& mutable_value() { return var_.mutable_value(); }
    const Array<T>& grad() const { return var_.grad(); }
    Array<T>& mutable_grad() { return var_.node()->grad_buffer(); }
    void zero_grad() { var_.zero_grad(); }
    const Shape& shape() const { return var_.shape(); }
    std::size_t size() const { return var_.value().size(); }

private:
    std::string name_;
    Var<T> var_;
};

}  // namespace nartsp
