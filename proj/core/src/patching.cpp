#include "voxmae/patching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxmae/error.hpp"
#include "voxmae/ops.hpp"

namespace voxmae {

PatchGrid PatchGrid::make(const Extents& volume, const Extents& patch) {
  static const char* kAxis[] = {"D", "H", "W"};
  PatchGrid g;
  g.volume = volume;
  g.patch = patch;
  for (std::size_t i = 0; i < 3; ++i) {
    if (patch[i] == 0 || volume[i] == 0) {
      throw ConfigError(std::string("patch grid: axis ") + kAxis[i] + " has zero extent");
    }
    if (volume[i] % patch[i] != 0) {
      throw ConfigError(std::string("patch grid: axis ") + kAxis[i] + " extent " +
                        std::to_string(volume[i]) + " is not divisible by patch extent " +
                        std::to_string(patch[i]));
    }
    g.grid[i] = volume[i] / patch[i];
  }
  g.count = g.grid[0] * g.grid[1] * g.grid[2];
  g.patch_dim = patch[0] * patch[1] * patch[2];
  return g;
}

std::vector<std::size_t> patch_voxel_order(const PatchGrid& g) {
  std::vector<std::size_t> order;
  order.reserve(g.count * g.patch_dim);
  for (std::size_t t = 0; t < g.count; ++t) {
    const GridCoord c = g.coord(t);
    for (std::size_t lz = 0; lz < g.patch[0]; ++lz) {
      for (std::size_t ly = 0; ly < g.patch[1]; ++ly) {
        for (std::size_t lx = 0; lx < g.patch[2]; ++lx) {
          const std::size_t z = c[0] * g.patch[0] + lz;
          const std::size_t y = c[1] * g.patch[1] + ly;
          const std::size_t x = c[2] * g.patch[2] + lx;
          order.push_back((z * g.volume[1] + y) * g.volume[2] + x);
        }
      }
    }
  }
  return order;
}

template <typename T>
PatchSequence<T> patchify(const Volume& v, const Extents& patch) {
  const PatchGrid g = PatchGrid::make(v.extents, patch);
  const auto order = patch_voxel_order(g);
  std::vector<T> values(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) values[i] = static_cast<T>(v.voxels[order[i]]);
  return {g, Tensor<T>::constant({g.count, g.patch_dim}, std::move(values)), true};
}

template <typename T>
Volume unpatchify(const PatchSequence<T>& p) {
  if (!p.raw || p.tokens.shape() != Shape{p.grid.count, p.grid.patch_dim}) {
    throw ContractError("unpatchify: tokens must be raw " + std::to_string(p.grid.count) + "x" +
                        std::to_string(p.grid.patch_dim) + ", got " +
                        to_string(p.tokens.shape()) + (p.raw ? "" : " (embedded)"));
  }
  const auto order = patch_voxel_order(p.grid);
  std::vector<float> voxels(order.size());
  const auto src = p.tokens.data();
  for (std::size_t i = 0; i < order.size(); ++i) voxels[order[i]] = static_cast<float>(src[i]);
  return Volume(p.grid.volume, std::move(voxels));
}

template <typename T>
Tensor<T> unpatchify_channels(const Tensor<T>& tokens, const PatchGrid& grid, std::size_t channels) {
  const Shape expected{grid.count, channels * grid.patch_dim};
  if (tokens.shape() != expected) {
    throw DimensionError("unpatchify_channels: expected " + to_string(expected) + ", got " +
                         to_string(tokens.shape()));
  }
  const auto order = patch_voxel_order(grid);
  const std::size_t voxels = order.size();
  std::vector<std::size_t> index(channels * voxels);
  for (std::size_t t = 0; t < grid.count; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t l = 0; l < grid.patch_dim; ++l) {
        const std::size_t dst = c * voxels + order[t * grid.patch_dim + l];
        index[dst] = (t * channels + c) * grid.patch_dim + l;
      }
    }
  }
  return ops::gather_elements(tokens, index,
                              Shape{channels, grid.volume[0], grid.volume[1], grid.volume[2]});
}

template <typename T>
Tensor<T> positional_encoding(const PatchGrid& grid, std::size_t dim) {
  if (dim == 0 || dim % 6 != 0) {
    throw ConfigError("positional encoding: dim " + std::to_string(dim) +
                      " is not a positive multiple of 6");
  }
  const std::size_t per_axis = dim / 3;
  std::vector<T> values(grid.count * dim);
  for (std::size_t t = 0; t < grid.count; ++t) {
    const GridCoord c = grid.coord(t);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const double pos = static_cast<double>(c[axis]);
      for (std::size_t k = 0; k < per_axis / 2; ++k) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / per_axis);
        T* dst = values.data() + t * dim + axis * per_axis + 2 * k;
        dst[0] = static_cast<T>(std::sin(pos * freq));
        dst[1] = static_cast<T>(std::cos(pos * freq));
      }
    }
  }
  return Tensor<T>::constant({grid.count, dim}, std::move(values));
}

std::size_t masked_count(std::size_t n, double ratio) {
  const double product = ratio * static_cast<double>(n);
  return static_cast<std::size_t>(std::ceil(product - 1e-9 * std::max(1.0, product)));
}

MaskPlan sample_mask(const PatchGrid& grid, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("mask ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
  const std::size_t n = grid.count;
  const std::size_t k = masked_count(n, ratio);
  if (k >= n) {
    throw ParameterError("mask ratio " + std::to_string(ratio) + " masks all " + std::to_string(n) +
                         " patches");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  MaskPlan plan;
  plan.grid = grid;
  plan.ratio = ratio;
  plan.masked.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  plan.visible.assign(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

template <typename T>
VisibleTokens<T> gather_visible(const PatchSequence<T>& p, const MaskPlan& m) {
  if (!(p.grid == m.grid)) throw ContractError("gather_visible: sequence and mask use different grids");
  if (p.tokens.rank() != 2 || p.tokens.dim(0) != p.grid.count) {
    throw ContractError("gather_visible: expected " + std::to_string(p.grid.count) +
                        " tokens, got shape " + to_string(p.tokens.shape()));
  }
  return {p.grid, ops::gather_rows(p.tokens, m.visible), m.visible};
}

template <typename T>
PatchSequence<T> scatter_full(const Tensor<T>& visible, const Tensor<T>& mask_token,
                              const MaskPlan& m) {
  if (visible.rank() != 2 || visible.dim(0) != m.visible.size()) {
    throw ContractError("scatter_full: " + std::to_string(m.visible.size()) +
                        " visible tokens expected, got shape " + to_string(visible.shape()));
  }
  const std::size_t dim = visible.dim(1);
  if (mask_token.shape() != Shape{dim}) {
    throw ContractError("scatter_full: mask token shape " + to_string(mask_token.shape()) +
                        " does not match token dim " + std::to_string(dim));
  }
  // Rows 0..V-1 are the visible tokens, row V is the mask token.
  const std::size_t mask_row = m.visible.size();
  std::vector<std::size_t> source(m.grid.count, mask_row);
  for (std::size_t i = 0; i < m.visible.size(); ++i) source[m.visible[i]] = i;
  const Tensor<T> table = ops::concat<T>({visible, ops::reshape(mask_token, Shape{1, dim})}, 0);
  return {m.grid, ops::gather_rows(table, source), false};
}

#define VOXMAE_INSTANTIATE_PATCHING(T)                                                       \
  template PatchSequence<T> patchify<T>(const Volume&, const Extents&);                      \
  template Volume unpatchify<T>(const PatchSequence<T>&);                                    \
  template Tensor<T> unpatchify_channels<T>(const Tensor<T>&, const PatchGrid&, std::size_t); \
  template Tensor<T> positional_encoding<T>(const PatchGrid&, std::size_t);                  \
  template VisibleTokens<T> gather_visible<T>(const PatchSequence<T>&, const MaskPlan&);     \
  template PatchSequence<T> scatter_full<T>(const Tensor<T>&, const Tensor<T>&, const MaskPlan&);

VOXMAE_INSTANTIATE_PATCHING(float)
VOXMAE_INSTANTIATE_PATCHING(double)

#undef VOXMAE_INSTANTIATE_PATCHING

}  // namespace voxmae
