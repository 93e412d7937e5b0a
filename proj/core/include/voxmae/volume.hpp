#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace voxmae {

/// (D, H, W); D is the slowest-varying axis.
using Extents = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

std::size_t voxel_count(const Extents& e);
std::string to_string(const Extents& e);

/// Single-channel intensity grid, row-major with D as the outer axis.
struct Volume {
  Extents extents{0, 0, 0};
  std::vector<float> voxels;
  Spacing spacing{1.0, 1.0, 1.0};

  Volume() = default;
  Volume(Extents e, std::vector<float> v, Spacing s = {1.0, 1.0, 1.0});

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * extents[1] + y) * extents[2] + x;
  }
  float at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[index(z, y, x)]; }

  bool operator==(const Volume&) const = default;
};

/// Per-voxel class ids in [0, num_classes).
struct LabelMap {
  Extents extents{0, 0, 0};
  std::vector<std::uint8_t> classes;
  std::size_t num_classes = 2;

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * extents[1] + y) * extents[2] + x;
  }
  std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const {
    return classes[index(z, y, x)];
  }

  /// Throws DataError if the payload length or any class id is inconsistent.
  void validate() const;

  bool operator==(const LabelMap&) const = default;
};

/// z-score over all voxels. A constant volume maps to all zeros.
Volume normalize_volume(const Volume& v);

}  // namespace voxmae
