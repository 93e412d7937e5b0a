#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxmae/mae.hpp"
#include "voxmae/segmentation.hpp"

namespace voxmae {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

/// 8^3 volume, 4^3 patches, two encoder stages of width 6 and 12.
MaeConfig tiny_mae_config();
SegConfig tiny_seg_config();

/// Finite-difference checks (eps 1e-5, double precision) of every
/// differentiable op, each against a random linear functional of its output.
std::vector<GradCheckResult> op_gradient_checks(std::uint64_t seed, double tolerance = 1e-6);

/// Full tiny-model checks over every parameter.
GradCheckResult mae_gradient_check(std::uint64_t seed, double tolerance = 1e-4);
GradCheckResult seg_gradient_check(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace voxmae
