#include "voxmae/parameters.hpp"

#include "voxmae/error.hpp"
#include "voxmae/rng.hpp"

namespace voxmae {

template <typename T>
Tensor<T> ParameterStore<T>::create(const std::string& name, Shape shape, Init init) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  std::vector<T> values(numel(shape), T(0));
  switch (init) {
    case Init::Normal002: {
      Rng rng(seed_, "init/" + name);
      for (auto& v : values) v = static_cast<T>(0.02 * rng.normal());
      break;
    }
    case Init::Ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::Zeros:
      break;
  }
  auto p = Tensor<T>::parameter(name, std::move(shape), std::move(values));
  index_.emplace(name, params_.size());
  params_.push_back(p);
  return p;
}

template <typename T>
std::size_t ParameterStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
const Tensor<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace voxmae
