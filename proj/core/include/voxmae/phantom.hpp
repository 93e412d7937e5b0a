#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxmae/rng.hpp"
#include "voxmae/volume.hpp"

namespace voxmae {

/// Geometry and intensity model of a synthetic phantom: one ellipsoidal organ
/// (class 1) on background (class 0), containing one sphere per lesion class
/// (classes 2 .. num_classes-1).
struct PhantomConfig {
  Extents extents{32, 32, 32};
  Spacing spacing{1.0, 1.0, 1.0};
  std::size_t num_classes = 3;
  /// Organ semi-axes as fractions of the matching extent.
  std::array<double, 2> organ_radius{0.35, 0.45};
  /// Lesion radius as a fraction of the smallest extent.
  std::array<double, 2> lesion_radius{0.12, 0.17};
  /// Mean intensity per class; size must equal num_classes.
  std::vector<double> class_means{0.0, 1.0, 2.0};
  double noise_sigma = 0.05;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// One phantom and its labels; deterministic in `rng`.
std::pair<Volume, LabelMap> generate_phantom(const PhantomConfig& config, Rng& rng);

enum class Split { PretrainUnlabeled, TrainLabeled, Validation, Test };

const char* to_string(Split split);
Split split_from_string(const std::string& name);

struct SplitCounts {
  std::size_t pretrain = 40;
  std::size_t train = 40;
  std::size_t validation = 8;
  std::size_t test = 8;
};

struct DatasetItem {
  Volume volume;
  std::optional<LabelMap> labels;
};

/// Items plus disjoint split index lists. Pretraining items carry no labels.
struct Dataset {
  PhantomConfig config;
  std::uint64_t seed = 0;
  std::vector<DatasetItem> items;
  std::vector<std::size_t> pretrain;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& indices(Split split) const;
  std::vector<std::size_t>& indices(Split split);
  /// Throws DataError if an index is out of range or appears in two splits.
  void validate() const;
};

/// Item i of split s is drawn from stream "phantom/<s>/<i>" under `seed`.
Dataset generate_dataset(const PhantomConfig& config, const SplitCounts& counts,
                         std::uint64_t seed);

}  // namespace voxmae
