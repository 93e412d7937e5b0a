#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "voxmae/phantom.hpp"
#include "voxmae/volume.hpp"

namespace voxmae {

/// Anything that maps a raw volume to a label map.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual LabelMap predict(const Volume& volume) const = 0;
  virtual std::size_t num_classes() const = 0;
};

/// 2|A∩B| / (|A| + |B|) for A = {pred == c}, B = {gt == c}; 1 when both are
/// empty. Throws ContractError on an extent mismatch.
double dice_score(const LabelMap& pred, const LabelMap& gt, std::uint8_t c);

struct MetricReport {
  /// Item-averaged Dice per class, background included.
  std::vector<double> per_class;
  /// Mean of per_class over classes 1..C-1.
  double mean_foreground = 0.0;
  /// per_item[i][c] for the i-th evaluated item.
  std::vector<std::vector<double>> per_item;
  std::size_t items = 0;

  bool operator==(const MetricReport&) const = default;
};

/// Aggregates per-item Dice into a report. Rows must all have the same class count (>= 2).
MetricReport aggregate_dice(std::vector<std::vector<double>> per_item);

/// Predicts every listed item and aggregates Dice. Throws DataError on an
/// unlabeled item and ConfigError on an empty list.
MetricReport evaluate(const Segmenter& model, const Dataset& dataset,
                      const std::vector<std::size_t>& items);

/// 1-based index of the first value >= t, or nothing. Throws ParameterError unless t in (0, 1).
std::optional<std::size_t> epochs_to_threshold(const std::vector<double>& curve, double t);

/// Median with the mean-of-middle-pair convention; throws ContractError when empty.
double median(std::vector<double> values);

}  // namespace voxmae
