#include "rainsar/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "rainsar/error.hpp"

namespace rainsar::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Index numel(const Shape& s) {
    Index n = 1;
    for (Index d : s) n *= d;
    return n;
}

std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad) : node_(std::make_shared<Node<Scalar>>()) {
    if (nn::numel(shape) != values.size())
        throw ShapeMismatch("shape " + nn::to_string(shape) + " does not match " + std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
    const Index n = nn::numel(shape);
    return Tensor(std::move(shape), Buffer<Scalar>::Zero(n), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Scalar v) {
    const Index n = nn::numel(shape);
    return Tensor(std::move(shape), Buffer<Scalar>::Constant(n, v), false);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::result(Shape shape, Buffer<Scalar> values, std::vector<Tensor> parents, const char* op,
                                      Backward backward) {
    Tensor out(std::move(shape), std::move(values), false);
    out.node_->op = op;
    if (!g_grad_enabled) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    return out;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
    if (numel() != 1) throw ShapeMismatch("item() on tensor of shape " + nn::to_string(shape()));
    return node_->value(0);
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
    if (numel() != 1) throw ShapeMismatch("backward() needs a single-element tensor");
    if (!requires_grad()) return;

    // iterative post-order DFS gives a topological order
    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node<Scalar>* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad() += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<Scalar>* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) {
            n->backward(*n);
            n->grad.resize(0);  // intermediate gradients are not needed afterwards
        }
    }
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
    if (node_->grad.size() == node_->value.size()) node_->grad.setZero();
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
    return Tensor(node_->shape, node_->value, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace rainsar::nn
