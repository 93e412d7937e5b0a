#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace voxmae {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class DType { Float32, Float64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() {
  return DType::Float32;
}
template <>
constexpr DType dtype_of<double>() {
  return DType::Float64;
}

const char* to_string(DType dtype);

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>& out)>;

/// One vertex of the autodiff graph. Values are written once by the op
/// that creates the node; only parameter leaves are mutated afterwards,
/// and only between training steps.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::string op = "leaf";
  std::string name;
  bool requires_grad = false;
  bool differentiable = true;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  /// Gradient buffer, zero-filled on first access.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share the underlying node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);
  /// Leaf that participates in differentiation.
  static Tensor parameter(std::string name, Shape shape, std::vector<T> values);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value; }
  T item() const;

  /// Writable view of a leaf's values. Throws ContractError on op outputs.
  std::span<T> mutable_data();

  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  const std::string& op() const { return node_->op; }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

  /// Constant copy of the values, cut off from the graph.
  Tensor detach() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Disables graph construction on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op output. Checks every value for NaN/Inf (NumericError naming
/// `op`); records parents and the backward closure only when some input
/// requires a gradient and graph construction is enabled.
template <typename T>
Tensor<T> make_op(std::string_view op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward);

/// Gradients of a scalar loss with respect to the leaves that require them.
template <typename T>
class GradientMap {
 public:
  /// Gradient of `param`; a zero tensor of matching shape when `param` does
  /// not contribute to the loss.
  Tensor<T> of(const Tensor<T>& param) const;
  bool contains(const Tensor<T>& param) const;
  std::size_t size() const noexcept { return grads_.size(); }

  void insert(const Tensor<T>& param, Tensor<T> grad);

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Each reachable node is visited once;
/// shared subexpressions accumulate additively.
template <typename T>
GradientMap<T> backward(const Tensor<T>& loss);

/// Every node reachable from `root` (including `root`), in topological order.
template <typename T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root);

}  // namespace voxmae
