#include "voxmae/volume.hpp"

#include <algorithm>
#include <cmath>

#include "voxmae/error.hpp"

namespace voxmae {

std::size_t voxel_count(const Extents& e) { return e[0] * e[1] * e[2]; }

std::string to_string(const Extents& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

Volume::Volume(Extents e, std::vector<float> v, Spacing s)
    : extents(e), voxels(std::move(v)), spacing(s) {
  if (voxels.size() != voxel_count(extents)) {
    throw DimensionError("volume " + to_string(extents) + " needs " +
                         std::to_string(voxel_count(extents)) + " voxels, got " +
                         std::to_string(voxels.size()));
  }
}

void LabelMap::validate() const {
  if (classes.size() != voxel_count(extents)) {
    throw DataError("label map " + to_string(extents) + " holds " +
                    std::to_string(classes.size()) + " labels");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= num_classes) {
      throw DataError("label " + std::to_string(classes[i]) + " at voxel " + std::to_string(i) +
                      " is not below num_classes " + std::to_string(num_classes));
    }
  }
}

Volume normalize_volume(const Volume& v) {
  if (v.voxels.size() < 2) throw ContractError("normalize_volume: needs at least two voxels");
  double total = 0.0;
  for (float x : v.voxels) total += x;
  const double mu = total / static_cast<double>(v.voxels.size());
  double sq = 0.0;
  for (float x : v.voxels) sq += (x - mu) * (x - mu);
  const double sd = std::sqrt(sq / static_cast<double>(v.voxels.size()));
  Volume out = v;
  if (sd <= 1e-9 * std::max(1.0, std::abs(mu))) {
    std::fill(out.voxels.begin(), out.voxels.end(), 0.0f);
    return out;
  }
  for (auto& x : out.voxels) x = static_cast<float>((x - mu) / sd);
  return out;
}

}  // namespace voxmae
