#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "voxmae/error.hpp"
#include "voxmae/metrics.hpp"
#include "voxmae/phantom.hpp"

namespace {

using namespace voxmae;
using voxmae::testing::random_labels;

double brute_dice(const LabelMap& p, const LabelMap& g, std::uint8_t c) {
  long inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < p.classes.size(); ++i) {
    const bool a = p.classes[i] == c, b = g.classes[i] == c;
    inter += a && b;
    np += a;
    ng += b;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

TEST(Dice, MatchesBruteForceCounting) {
  Rng rng(0, "dice");
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_labels({8, 8, 8}, 3, rng);
    const auto g = random_labels({8, 8, 8}, 3, rng);
    for (std::uint8_t c = 0; c < 3; ++c) {
      EXPECT_EQ(dice_score(p, g, c), brute_dice(p, g, c));
      EXPECT_EQ(dice_score(p, g, c), dice_score(g, p, c));
    }
  }
}

TEST(Dice, ConventionsAndExtremes) {
  Rng rng(1, "dice");
  const auto a = random_labels({4, 4, 4}, 2, rng);
  EXPECT_EQ(dice_score(a, a, 1), 1.0);
  EXPECT_EQ(dice_score(a, a, 7), 1.0);  // absent in both
  LabelMap inv = a;
  for (auto& c : inv.classes) c = static_cast<std::uint8_t>(1 - c);
  EXPECT_EQ(dice_score(a, inv, 1), 0.0);
  LabelMap small = a;
  small.extents = {4, 4, 2};
  small.classes.resize(32);
  EXPECT_THROW(dice_score(a, small, 1), ContractError);
}

TEST(Dice, AggregateAveragesForegroundClasses) {
  const auto r = aggregate_dice({{1.0, 0.5, 0.25}, {1.0, 0.7, 0.45}});
  ASSERT_EQ(r.per_class.size(), 3u);
  EXPECT_DOUBLE_EQ(r.per_class[1], 0.6);
  EXPECT_DOUBLE_EQ(r.per_class[2], 0.35);
  EXPECT_DOUBLE_EQ(r.mean_foreground, 0.475);
  EXPECT_EQ(r.items, 2u);
}

class OracleSegmenter : public Segmenter {
 public:
  explicit OracleSegmenter(const Dataset& ds) : ds_(ds) {}
  LabelMap predict(const Volume& v) const override {
    for (const auto& item : ds_.items)
      if (item.volume == v && item.labels) return *item.labels;
    throw ContractError("unknown volume");
  }
  std::size_t num_classes() const override { return 3; }

 private:
  const Dataset& ds_;
};

TEST(Evaluate, PerfectPredictorScoresOne) {
  const Dataset ds = generate_dataset(PhantomConfig{}, SplitCounts{1, 1, 1, 2}, 3);
  const OracleSegmenter oracle(ds);
  const auto r = evaluate(oracle, ds, ds.indices(Split::Test));
  EXPECT_EQ(r.items, 2u);
  EXPECT_EQ(r.mean_foreground, 1.0);
  EXPECT_THROW(evaluate(oracle, ds, ds.indices(Split::PretrainUnlabeled)), DataError);
  EXPECT_THROW(evaluate(oracle, ds, {}), ConfigError);
}

TEST(EpochsToThreshold, FirstCrossingIsOneBased) {
  EXPECT_EQ(epochs_to_threshold({0.1, 0.5, 0.7, 0.4}, 0.6), 3u);
  EXPECT_EQ(epochs_to_threshold({0.6}, 0.6), 1u);
  EXPECT_FALSE(epochs_to_threshold({0.1, 0.2}, 0.6));
  EXPECT_THROW(epochs_to_threshold({0.1}, 1.0), ParameterError);
  EXPECT_THROW(epochs_to_threshold({0.1}, 0.0), ParameterError);
}

TEST(EpochsToThreshold, MonotoneInThreshold) {
  Rng rng(4, "ett");
  for (int t = 0; t < 200; ++t) {
    std::vector<double> curve(20);
    for (auto& v : curve) v = rng.uniform();
    std::size_t prev = 0;
    for (double th = 0.05; th < 1.0; th += 0.05) {
      const auto e = epochs_to_threshold(curve, th);
      const std::size_t val = e ? *e : std::numeric_limits<std::size_t>::max();
      EXPECT_GE(val, prev);
      prev = val;
    }
  }
}

TEST(Median, OddEvenAndInfinity) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(median({1.0, inf, inf}), inf);
  EXPECT_THROW(median({}), Error);
}

}  // namespace
