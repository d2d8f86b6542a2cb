#include "nartsp/autodiff.hpp"

#include <unordered_set>

namespace nartsp {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward(const Var<T>& loss) {
    if (!loss.valid()) throw ContractError("backward on empty Var");
    if (loss.value().size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    Node<T>* root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward_fn || node->grad.empty()) continue;
        node->backward_fn(*node);
        if (node != root) node->grad = Array<T>();
    }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace nartsp
