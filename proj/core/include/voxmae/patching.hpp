#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "voxmae/rng.hpp"
#include "voxmae/tensor.hpp"
#include "voxmae/volume.hpp"

namespace voxmae {

using GridCoord = std::array<std::size_t, 3>;

/// Decomposition of a volume into non-overlapping patches. Patch and grid
/// indices are linear z-major (z slowest).
struct PatchGrid {
  Extents volume{0, 0, 0};
  Extents patch{0, 0, 0};
  Extents grid{0, 0, 0};
  std::size_t count = 0;
  std::size_t patch_dim = 0;

  /// Throws ConfigError naming the first axis the patch does not divide.
  static PatchGrid make(const Extents& volume, const Extents& patch);

  std::size_t linear(const GridCoord& c) const { return (c[0] * grid[1] + c[1]) * grid[2] + c[2]; }
  GridCoord coord(std::size_t index) const {
    return {index / (grid[1] * grid[2]), (index / grid[2]) % grid[1], index % grid[2]};
  }

  bool operator==(const PatchGrid&) const = default;
};

/// Token sequence over a PatchGrid: N x patch_dim when raw, N x embed_dim otherwise.
template <typename T>
struct PatchSequence {
  PatchGrid grid;
  Tensor<T> tokens;
  bool raw = true;
};

/// Flat volume index of every (token, local voxel) pair, token-major.
std::vector<std::size_t> patch_voxel_order(const PatchGrid& grid);

template <typename T>
PatchSequence<T> patchify(const Volume& v, const Extents& patch);

/// Exact inverse of patchify. Throws ContractError on embedded tokens.
template <typename T>
Volume unpatchify(const PatchSequence<T>& p);

/// Differentiable re-assembly of per-patch channel blocks: `tokens` is
/// N x (channels * patch_dim) with channel-major blocks per token; the result
/// is channels x D x H x W.
template <typename T>
Tensor<T> unpatchify_channels(const Tensor<T>& tokens, const PatchGrid& grid, std::size_t channels);

/// Fixed 3D sinusoidal encoding, N x dim. Each axis gets dim/3 channels of
/// interleaved sin/cos at frequencies 10000^(-2k/(dim/3)), concatenated (z, y, x).
/// Throws ConfigError unless dim is a positive multiple of 6.
template <typename T>
Tensor<T> positional_encoding(const PatchGrid& grid, std::size_t dim);

/// Random partition of patch indices into masked and visible sets.
struct MaskPlan {
  PatchGrid grid;
  double ratio = 0.75;
  std::vector<std::size_t> masked;   // sorted
  std::vector<std::size_t> visible;  // sorted complement
};

/// ceil(ratio * n), robust to the representation error of `ratio`.
std::size_t masked_count(std::size_t n, double ratio);

/// Shuffle-then-take sample of masked_count(N, ratio) indices. Throws
/// ParameterError unless ratio is in (0, 1) and leaves at least one visible patch.
MaskPlan sample_mask(const PatchGrid& grid, double ratio, Rng& rng);

/// Visible tokens in ascending original index, with the index list kept for scattering.
template <typename T>
struct VisibleTokens {
  PatchGrid grid;
  Tensor<T> tokens;
  std::vector<std::size_t> indices;
};

template <typename T>
VisibleTokens<T> gather_visible(const PatchSequence<T>& p, const MaskPlan& m);

/// N-token sequence with visible tokens back in their slots and every masked
/// slot holding `mask_token` (shape {dim}).
template <typename T>
PatchSequence<T> scatter_full(const Tensor<T>& visible, const Tensor<T>& mask_token,
                              const MaskPlan& m);

}  // namespace voxmae
