#include "voxmae/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "voxmae/error.hpp"

namespace voxmae {
namespace {

void check_range(const char* what, const std::array<double, 2>& r) {
  if (!(r[0] > 0.0 && r[0] <= r[1] && r[1] <= 0.5)) {
    throw ConfigError(std::string(what) + " radius range must satisfy 0 < lo <= hi <= 0.5");
  }
}

struct Sphere {
  std::array<double, 3> center;
  double radius;
};

}  // namespace

void PhantomConfig::validate() const {
  if (num_classes < 2) throw ConfigError("phantom: num_classes must be at least 2");
  if (num_classes > 255) throw ConfigError("phantom: num_classes must fit in a byte");
  if (class_means.size() != num_classes) {
    throw ConfigError("phantom: expected " + std::to_string(num_classes) + " class means, got " +
                      std::to_string(class_means.size()));
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("phantom: noise sigma must be non-negative");
  for (double s : spacing) {
    if (!(s > 0.0)) throw ConfigError("phantom: spacing must be positive");
  }
  check_range("organ", organ_radius);
  check_range("lesion", lesion_radius);
  const double min_extent = static_cast<double>(*std::min_element(extents.begin(), extents.end()));
  const double organ_min = organ_radius[0] * min_extent;
  const double lesion_min = lesion_radius[0] * min_extent;
  // A lesion needs radius >= 1 voxel to cover a voxel centre, and the organ
  // needs room for it at half its smallest semi-axis.
  const bool organ_fits = organ_min >= 1.0;
  const bool lesion_fits = num_classes < 3 || (lesion_min >= 1.0 && organ_min >= 2.0 * lesion_min);
  if (!organ_fits || !lesion_fits) {
    throw ConfigError("phantom: extents " + to_string(extents) +
                      " are too small to fit the minimum organ/lesion radii");
  }
}

std::pair<Volume, LabelMap> generate_phantom(const PhantomConfig& config, Rng& rng) {
  config.validate();
  const Extents& e = config.extents;
  std::array<double, 3> axes{};
  std::array<double, 3> centre{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double extent = static_cast<double>(e[i]);
    axes[i] = extent * rng.uniform(config.organ_radius[0], config.organ_radius[1]);
    centre[i] = rng.uniform(axes[i], extent - axes[i]);
  }
  const double min_axis = *std::min_element(axes.begin(), axes.end());
  const double min_extent = static_cast<double>(*std::min_element(e.begin(), e.end()));

  // A ball of radius r centred within (min_axis - r) of the organ centre lies
  // inside the ball of radius min_axis, hence inside the ellipsoid.
  std::vector<Sphere> lesions;
  for (std::size_t c = 2; c < config.num_classes; ++c) {
    double r = min_extent * rng.uniform(config.lesion_radius[0], config.lesion_radius[1]);
    r = std::min(r, 0.5 * min_axis);
    const double reach = min_axis - r;
    std::array<double, 3> offset{};
    do {
      for (auto& o : offset) o = rng.uniform(-1.0, 1.0);
    } while (offset[0] * offset[0] + offset[1] * offset[1] + offset[2] * offset[2] > 1.0);
    Sphere s{};
    for (std::size_t i = 0; i < 3; ++i) s.center[i] = centre[i] + reach * offset[i];
    s.radius = r;
    lesions.push_back(s);
  }

  LabelMap labels;
  labels.extents = e;
  labels.num_classes = config.num_classes;
  labels.classes.assign(voxel_count(e), 0);
  for (std::size_t z = 0; z < e[0]; ++z) {
    for (std::size_t y = 0; y < e[1]; ++y) {
      for (std::size_t x = 0; x < e[2]; ++x) {
        const std::array<double, 3> p{z + 0.5, y + 0.5, x + 0.5};
        double q = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
          const double t = (p[i] - centre[i]) / axes[i];
          q += t * t;
        }
        std::uint8_t cls = q <= 1.0 ? 1 : 0;
        if (cls == 1) {
          for (std::size_t l = 0; l < lesions.size(); ++l) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
              const double t = p[i] - lesions[l].center[i];
              d2 += t * t;
            }
            if (d2 <= lesions[l].radius * lesions[l].radius) cls = static_cast<std::uint8_t>(l + 2);
          }
        }
        labels.classes[labels.index(z, y, x)] = cls;
      }
    }
  }

  std::vector<float> voxels(labels.classes.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const double mean = config.class_means[labels.classes[i]];
    const double noise = config.noise_sigma > 0.0 ? config.noise_sigma * rng.normal() : 0.0;
    voxels[i] = static_cast<float>(mean + noise);
  }
  return {Volume(e, std::move(voxels), config.spacing), std::move(labels)};
}

const char* to_string(Split split) {
  switch (split) {
    case Split::PretrainUnlabeled:
      return "pretrain-unlabeled";
    case Split::TrainLabeled:
      return "train-labeled";
    case Split::Validation:
      return "validation";
    case Split::Test:
      return "test";
  }
  return "unknown";
}

Split split_from_string(const std::string& name) {
  for (Split s : {Split::PretrainUnlabeled, Split::TrainLabeled, Split::Validation, Split::Test}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown split '" + name + "'");
}

const std::vector<std::size_t>& Dataset::indices(Split split) const {
  switch (split) {
    case Split::PretrainUnlabeled:
      return pretrain;
    case Split::TrainLabeled:
      return train;
    case Split::Validation:
      return validation;
    case Split::Test:
      break;
  }
  return test;
}

std::vector<std::size_t>& Dataset::indices(Split split) {
  return const_cast<std::vector<std::size_t>&>(std::as_const(*this).indices(split));
}

void Dataset::validate() const {
  std::vector<int> owner(items.size(), -1);
  int split_id = 0;
  for (const auto* list : {&pretrain, &train, &validation, &test}) {
    for (auto i : *list) {
      if (i >= items.size()) {
        throw DataError("dataset: split index " + std::to_string(i) + " out of range");
      }
      if (owner[i] != -1) {
        throw DataError("dataset: item " + std::to_string(i) + " appears in two splits");
      }
      owner[i] = split_id;
    }
    ++split_id;
  }
  for (auto i : pretrain) {
    if (items[i].labels) throw DataError("dataset: pretraining item " + std::to_string(i) + " is labeled");
  }
}

Dataset generate_dataset(const PhantomConfig& config, const SplitCounts& counts,
                         std::uint64_t seed) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  const std::pair<Split, std::size_t> plan[] = {{Split::PretrainUnlabeled, counts.pretrain},
                                                {Split::TrainLabeled, counts.train},
                                                {Split::Validation, counts.validation},
                                                {Split::Test, counts.test}};
  for (const auto& [split, count] : plan) {
    auto& list = ds.indices(split);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(seed, std::string("phantom/") + to_string(split) + "/" + std::to_string(i));
      auto [volume, labels] = generate_phantom(config, rng);
      list.push_back(ds.items.size());
      DatasetItem item{std::move(volume), std::nullopt};
      if (split != Split::PretrainUnlabeled) item.labels = std::move(labels);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

}  // namespace voxmae
