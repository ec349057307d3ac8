#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sdlpgc/tensor.hpp"

// Tape-free reverse-mode differentiation: every op result keeps shared
// pointers to its inputs plus a closure that pushes its gradient into them.
namespace sdlpgc::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    /// Gradient storage, zero-initialized on first use.
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    /// In-place access for optimizers and checkpoint loading only.
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    const Tensor& grad() const { return node_->grad; }
    void zero_grad();

    const std::shared_ptr<Node>& node() const noexcept { return node_; }

private:
    std::shared_ptr<Node> node_;
};

bool grad_enabled() noexcept;

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Wraps an op output. The closure is kept only when recording is enabled
/// and some parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Accumulates d(root)/d(leaf) into every reachable leaf. root must hold one element.
void backward(const Var& root);

}  // namespace sdlpgc::ag
