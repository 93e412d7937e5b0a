#include "voxmae/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "voxmae/error.hpp"

namespace voxmae {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

const char* to_string(DType dtype) {
  return dtype == DType::Float32 ? "float32" : "float64";
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  if (voxmae::numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                         std::to_string(voxmae::numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = voxmae::numel(shape);
  return constant(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return constant(Shape{}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::parameter(std::string name, Shape shape, std::vector<T> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->name = std::move(name);
  return t;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_->parents.empty() || node_->op != "leaf") {
    throw ContractError("mutable_data() on output of op '" + node_->op + "'");
  }
  return node_->value;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return constant(shape(), node_->value);
}

template <typename T>
Tensor<T> make_op(std::string_view op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i])) {
      throw NumericError("op '" + std::string(op) + "' produced a non-finite value at flat index " +
                         std::to_string(i) + " (output shape " + to_string(shape) + ")");
    }
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::string(op);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> GradientMap<T>::of(const Tensor<T>& param) const {
  auto it = grads_.find(param.node());
  if (it == grads_.end()) return Tensor<T>::zeros(param.shape());
  return it->second;
}

template <typename T>
bool GradientMap<T>::contains(const Tensor<T>& param) const {
  return grads_.count(param.node()) != 0;
}

template <typename T>
void GradientMap<T>::insert(const Tensor<T>& param, Tensor<T> grad) {
  if (grad.shape() != param.shape()) {
    throw DimensionError("gradient shape " + to_string(grad.shape()) +
                         " differs from parameter shape " + to_string(param.shape()));
  }
  grads_.emplace(param.node(), std::move(grad));
}

template <typename T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; graphs can be deep enough to overflow the stack.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
GradientMap<T> backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  GradientMap<T> result;
  if (!loss.requires_grad()) return result;

  auto order = topological_order(loss);
  for (auto* node : order) node->grad.clear();
  loss.node()->grad_buffer()[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->requires_grad || node->grad.empty()) continue;
    if (node->backward) node->backward(*node);
  }
  std::unordered_set<Node<T>*> collected;
  auto collect = [&](const std::shared_ptr<Node<T>>& leaf) {
    if (!leaf->requires_grad || !leaf->parents.empty()) return;
    if (!collected.insert(leaf.get()).second) return;
    std::vector<T> g = leaf->grad.empty() ? std::vector<T>(leaf->value.size(), T(0))
                                          : std::move(leaf->grad);
    result.insert(Tensor<T>(leaf), Tensor<T>::constant(leaf->shape, std::move(g)));
  };
  collect(loss.node_ptr());
  for (auto* node : order) {
    for (const auto& parent : node->parents) collect(parent);
  }
  for (auto* node : order) {
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
  return result;
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientMap<float>;
template class GradientMap<double>;
template Tensor<float> make_op(std::string_view, Shape, std::vector<float>,
                               const std::vector<Tensor<float>>&, BackwardFn<float>);
template Tensor<double> make_op(std::string_view, Shape, std::vector<double>,
                                const std::vector<Tensor<double>>&, BackwardFn<double>);
template GradientMap<float> backward(const Tensor<float>&);
template GradientMap<double> backward(const Tensor<double>&);
template std::vector<Node<float>*> topological_order(const Tensor<float>&);
template std::vector<Node<double>*> topological_order(const Tensor<double>&);

}  // namespace voxmae
