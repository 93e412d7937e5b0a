#include "voxmae/metrics.hpp"

#include <algorithm>

#include "voxmae/error.hpp"

namespace voxmae {

double dice_score(const LabelMap& pred, const LabelMap& gt, std::uint8_t c) {
  if (pred.extents != gt.extents) {
    throw ContractError("dice_score: extents " + to_string(pred.extents) + " vs " +
                        to_string(gt.extents));
  }
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.classes.size(); ++i) {
    const bool in_a = pred.classes[i] == c;
    const bool in_b = gt.classes[i] == c;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

MetricReport aggregate_dice(std::vector<std::vector<double>> per_item) {
  if (per_item.empty()) throw ConfigError("evaluate: no items");
  const std::size_t classes = per_item.front().size();
  if (classes < 2) throw ContractError("evaluate: need at least two classes");
  MetricReport r;
  r.per_class.assign(classes, 0.0);
  for (const auto& row : per_item) {
    if (row.size() != classes) throw ContractError("evaluate: ragged per-item Dice rows");
    for (std::size_t c = 0; c < classes; ++c) r.per_class[c] += row[c];
  }
  for (auto& v : r.per_class) v /= static_cast<double>(per_item.size());
  double fg = 0.0;
  for (std::size_t c = 1; c < classes; ++c) fg += r.per_class[c];
  r.mean_foreground = fg / static_cast<double>(classes - 1);
  r.items = per_item.size();
  r.per_item = std::move(per_item);
  return r;
}

MetricReport evaluate(const Segmenter& model, const Dataset& dataset,
                      const std::vector<std::size_t>& items) {
  const std::size_t classes = model.num_classes();
  std::vector<std::vector<double>> rows;
  rows.reserve(items.size());
  for (std::size_t i : items) {
    const DatasetItem& item = dataset.items.at(i);
    if (!item.labels) throw DataError("evaluate: item " + std::to_string(i) + " has no labels");
    const LabelMap pred = model.predict(item.volume);
    std::vector<double> row(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      row[c] = dice_score(pred, *item.labels, static_cast<std::uint8_t>(c));
    }
    rows.push_back(std::move(row));
  }
  return aggregate_dice(std::move(rows));
}

std::optional<std::size_t> epochs_to_threshold(const std::vector<double>& curve, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ParameterError("epochs_to_threshold: t must lie in (0, 1)");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i] >= t) return i + 1;
  }
  return std::nullopt;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace voxmae
