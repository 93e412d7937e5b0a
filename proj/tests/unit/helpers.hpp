#pragma once

#include <vector>

#include "voxmae/rng.hpp"
#include "voxmae/tensor.hpp"
#include "voxmae/volume.hpp"

namespace voxmae::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>::constant(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> random_param(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return Tensor<T>::parameter("p", std::move(shape), std::move(v));
}

inline Volume random_volume(const Extents& e, Rng& rng) {
  std::vector<float> v(voxel_count(e));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Volume(e, std::move(v));
}

inline LabelMap random_labels(const Extents& e, std::size_t classes, Rng& rng) {
  LabelMap m;
  m.extents = e;
  m.num_classes = classes;
  m.classes.resize(voxel_count(e));
  for (auto& c : m.classes) c = static_cast<std::uint8_t>(rng.below(classes));
  return m;
}

}  // namespace voxmae::testing
