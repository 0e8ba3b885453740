#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rainsar::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

Index numel(const Shape& s);
std::string to_string(const Shape& s);

template <typename Scalar>
struct Node {
    Shape shape;
    Buffer<Scalar> value;
    Buffer<Scalar> grad;  // empty until a gradient reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    Buffer<Scalar>& ensure_grad() {
        if (grad.size() != value.size()) grad = Buffer<Scalar>::Zero(value.size());
        return grad;
    }
};

/// Records whether new results join the graph. Thread-local, so independent
/// graphs in different threads do not interact.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Dense row-major n-D array taking part in reverse-mode differentiation.
/// Copies share the underlying node.
template <typename Scalar>
class Tensor {
public:
    using Backward = std::function<void(Node<Scalar>&)>;

    Tensor() = default;
    Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor constant(Shape shape, Scalar v);
    static Tensor scalar(Scalar v) { return constant({1}, v); }

    /// Result of an op. Parents are only recorded when grad mode is on and
    /// one of them requires a gradient.
    static Tensor result(Shape shape, Buffer<Scalar> values, std::vector<Tensor> parents, const char* op,
                         Backward backward);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    Index dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    Index numel() const { return node_->value.size(); }

    const Buffer<Scalar>& value() const { return node_->value; }
    Buffer<Scalar>& value() { return node_->value; }
    Scalar* data() { return node_->value.data(); }
    const Scalar* data() const { return node_->value.data(); }

    /// Zero-filled when no gradient has been accumulated.
    Buffer<Scalar>& grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    Scalar item() const;

    /// Back-propagates from a single-element tensor, accumulating into the
    /// gradients of every reachable leaf that requires one.
    void backward() const;
    void zero_grad();
    Tensor detach() const;

    Node<Scalar>* node() const { return node_.get(); }
    const std::shared_ptr<Node<Scalar>>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node<Scalar>> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace rainsar::nn
