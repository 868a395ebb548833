#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace uidiff::nn {

using Shape = std::vector<int>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    std::vector<double> value;
    std::vector<double> grad;  // empty until something flows into it
    Shape shape;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

/// Reference-semantics handle onto a graph node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const;
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    size_t numel() const { return node_->value.size(); }

    std::span<double> data() { return node_->value; }
    std::span<const double> data() const { return node_->value; }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    /// Gradient buffer (allocated as zeros on first access).
    std::span<double> grad() { return node_->ensure_grad(); }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    /// Same values in a fresh leaf node with no history.
    Tensor detach() const;
    /// Same storage, new shape (numel must match); gradient flows through.
    Tensor reshape(Shape shape) const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool fp32_matmul_enabled();

/// While alive, `linear` on this thread multiplies in single precision when
/// recording is off. Results stay deterministic; they differ from the double
/// path at about 1e-7 relative.
class Fp32MatmulGuard {
public:
    Fp32MatmulGuard();
    ~Fp32MatmulGuard();
    Fp32MatmulGuard(const Fp32MatmulGuard&) = delete;
    Fp32MatmulGuard& operator=(const Fp32MatmulGuard&) = delete;

private:
    bool previous_;
};

/// Builds an op result. Records parents and the backward closure only when
/// recording is on and at least one parent needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> backward_fn);

/// Reverse pass from a scalar; seeds d(loss)/d(loss) = 1.
void backward(const Tensor& loss);

}  // namespace uidiff::nn
