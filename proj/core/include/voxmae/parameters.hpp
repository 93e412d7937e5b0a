#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "voxmae/tensor.hpp"

namespace voxmae {

enum class Init { Normal002, Zeros, Ones };

/// Ordered, named set of trainable tensors. Each parameter is initialized from
/// its own stream "init/<name>", so values do not depend on creation order.
template <typename T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor<T> create(const std::string& name, Shape shape, Init init);

  const std::vector<Tensor<T>>& all() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_values() const;

  /// nullptr when absent.
  const Tensor<T>* find(std::string_view name) const;
  /// Throws ContractError when absent.
  const Tensor<T>& at(std::string_view name) const;

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<Tensor<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace voxmae
