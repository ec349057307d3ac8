#include "sdlpgc/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace sdlpgc::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
    if (node_) node_->grad = Tensor();
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    Var out(std::move(value), false);
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (auto& p : parents) node.parents.push_back(p.node());
    node.backward_fn = std::move(backward_fn);
    return out;
}

void backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1)
        throw std::invalid_argument("backward: root must be a defined scalar");
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            std::shared_ptr<Node> parent = node->parents[next++];
            if (parent && parent->requires_grad && seen.insert(parent.get()).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = it->get();
        if (!node->backward_fn) continue;
        if (!node->grad.empty()) node->backward_fn(*node);
        // Release the interior graph; leaves keep their accumulated gradient.
        node->backward_fn = nullptr;
        node->parents.clear();
        node->grad = Tensor();
    }
}

}  // namespace sdlpgc::ag
