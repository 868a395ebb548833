#include "uidiff/nn/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "uidiff/error.hpp"

namespace uidiff::nn {

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_fp32_matmul = false;
}

size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) { return fmt::format("[{}]", fmt::join(s, ",")); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw Error(ErrorCode::ShapeMismatch,
                    fmt::format("shape {} needs {} values, got {}", shape_str(shape), shape_numel(shape), values.size()));
    auto n = std::make_shared<Node>();
    n->value = std::move(values);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

int Tensor::dim(int i) const {
    const int nd = ndim();
    if (i < 0) i += nd;
    if (i < 0 || i >= nd) throw Error(ErrorCode::ShapeMismatch, fmt::format("dim {} out of range for {}", i, shape_str(shape())));
    return node_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
    if (numel() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on tensor " + shape_str(shape()));
    return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), values(), false); }

Tensor Tensor::reshape(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw Error(ErrorCode::ShapeMismatch, fmt::format("reshape {} -> {}", shape_str(this->shape()), shape_str(shape)));
    return make_result(std::move(shape), values(), {*this}, [](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    });
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool fp32_matmul_enabled() { return g_fp32_matmul; }

Fp32MatmulGuard::Fp32MatmulGuard() : previous_(g_fp32_matmul) { g_fp32_matmul = true; }
Fp32MatmulGuard::~Fp32MatmulGuard() { g_fp32_matmul = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->shape = std::move(shape);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
        if (any) {
            n->requires_grad = true;
            for (const auto& p : parents) n->parents.push_back(p.node_ptr());
            n->backward_fn = std::move(backward_fn);
        }
    }
    return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw Error(ErrorCode::ShapeMismatch, "backward() needs a scalar loss");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack{{loss.node(), 0}};
    visited.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) {
            // Parents that do not need gradients are skipped inside each op by checking requires_grad.
            n->backward_fn(*n);
        }
    }
}

}  // namespace uidiff::nn
