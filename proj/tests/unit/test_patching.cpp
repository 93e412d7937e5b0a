#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "voxmae/error.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/ops.hpp"
#include "voxmae/patching.hpp"

namespace {

using namespace voxmae;
using voxmae::testing::random_tensor;
using voxmae::testing::random_volume;

TEST(Patching, GridRejectsNonDivisibleExtents) {
  EXPECT_THROW(PatchGrid::make({10, 8, 8}, {4, 4, 4}), ConfigError);
  EXPECT_THROW(PatchGrid::make({8, 8, 8}, {0, 4, 4}), ConfigError);
  const auto g = PatchGrid::make({8, 12, 16}, {4, 4, 4});
  EXPECT_EQ(g.grid, (Extents{2, 3, 4}));
  EXPECT_EQ(g.count, 24u);
  EXPECT_EQ(g.patch_dim, 64u);
}

TEST(Patching, BijectionOnRandomVolumes) {
  Rng rng(0, "patch");
  for (int trial = 0; trial < 50; ++trial) {
    const Extents patch{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(3)};
    const Extents e{patch[0] * (1 + rng.below(4)), patch[1] * (1 + rng.below(4)),
                    patch[2] * (1 + rng.below(4))};
    const Volume v = random_volume(e, rng);
    EXPECT_EQ(unpatchify(patchify<float>(v, patch)), v);
  }
}

TEST(Patching, TokenLayoutIsZyxWithinPatch) {
  std::vector<float> vals(8 * 8 * 8);
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<float>(i);
  const Volume v({8, 8, 8}, vals);
  const auto p = patchify<float>(v, {4, 4, 4});
  // Token 1 is grid cell (0,0,1): voxels x in [4,8).
  EXPECT_EQ(p.tokens.data()[64 + 0], v.at(0, 0, 4));
  EXPECT_EQ(p.tokens.data()[64 + 1], v.at(0, 0, 5));
  EXPECT_EQ(p.tokens.data()[64 + 4], v.at(0, 1, 4));
  EXPECT_EQ(p.tokens.data()[64 + 16], v.at(1, 0, 4));
}

TEST(Patching, UnpatchifyRejectsEmbeddedSequences) {
  Rng rng(1, "patch");
  auto p = patchify<float>(random_volume({4, 4, 4}, rng), {2, 2, 2});
  p.raw = false;
  EXPECT_THROW(unpatchify(p), ContractError);
}

TEST(Patching, UnpatchifyChannelsPlacesEveryVoxel) {
  const auto grid = PatchGrid::make({4, 4, 4}, {2, 2, 2});
  const std::size_t channels = 2;
  std::vector<double> t(grid.count * grid.patch_dim * channels);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  auto out = unpatchify_channels(Tensor<double>::constant({grid.count, grid.patch_dim * channels}, t),
                                 grid, channels);
  ASSERT_EQ(out.shape(), (Shape{2, 4, 4, 4}));
  std::set<double> seen(out.data().begin(), out.data().end());
  EXPECT_EQ(seen.size(), t.size());
}

TEST(Patching, PositionalEncodingIsDeterministicAndDistinct) {
  const auto grid = PatchGrid::make({16, 16, 16}, {4, 4, 4});
  const auto a = positional_encoding<double>(grid, 24);
  const auto b = positional_encoding<double>(grid, 24);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < grid.count; ++i) {
    rows.emplace(a.data().begin() + i * 24, a.data().begin() + (i + 1) * 24);
  }
  EXPECT_EQ(rows.size(), grid.count);
  EXPECT_THROW(positional_encoding<double>(grid, 20), ConfigError);
}

TEST(Masking, CountIsCeilingOfRatioTimesN) {
  Rng rng(2, "mask");
  for (int trial = 0; trial < 50; ++trial) {
    const Extents g{1 + rng.below(5), 1 + rng.below(5), 2 + rng.below(5)};
    const auto grid = PatchGrid::make(g, {1, 1, 1});
    const double ratio = 0.05 + 0.9 * rng.uniform();
    const std::size_t expected = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(grid.count)));
    if (expected >= grid.count) {
      EXPECT_THROW(sample_mask(grid, ratio, rng), ParameterError);
      continue;
    }
    const MaskPlan m = sample_mask(grid, ratio, rng);
    EXPECT_EQ(m.masked.size(), expected);
    EXPECT_EQ(m.masked.size() + m.visible.size(), grid.count);
    std::vector<std::size_t> all(m.masked);
    all.insert(all.end(), m.visible.begin(), m.visible.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
    EXPECT_TRUE(std::is_sorted(m.masked.begin(), m.masked.end()));
  }
}

TEST(Masking, ExactProductsAreNotRoundedUp) {
  EXPECT_EQ(masked_count(512, 0.75), 384u);
  EXPECT_EQ(masked_count(10, 0.3), 3u);
  EXPECT_EQ(masked_count(10, 0.31), 4u);
}

TEST(Masking, InvalidRatiosAreRejected) {
  Rng rng(3, "mask");
  const auto grid = PatchGrid::make({4, 4, 4}, {2, 2, 2});
  EXPECT_THROW(sample_mask(grid, 0.0, rng), ParameterError);
  EXPECT_THROW(sample_mask(grid, 1.0, rng), ParameterError);
  EXPECT_THROW(sample_mask(grid, 0.95, rng), ParameterError);  // masks all 8
}

TEST(Masking, SeededDeterminism) {
  const auto grid = PatchGrid::make({32, 32, 32}, {4, 4, 4});
  Rng a(9, "mask/x"), b(9, "mask/x"), c(9, "mask/y");
  const auto ma = sample_mask(grid, 0.75, a);
  EXPECT_EQ(ma.masked, sample_mask(grid, 0.75, b).masked);
  EXPECT_NE(ma.masked, sample_mask(grid, 0.75, c).masked);
}

TEST(Masking, MarginalFrequencyIsUniform) {
  const auto grid = PatchGrid::make({16, 16, 16}, {4, 4, 4});
  Rng rng(4, "mask/freq");
  std::vector<int> hits(grid.count, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d)
    for (std::size_t i : sample_mask(grid, 0.5, rng).masked) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(draws), 0.5, 0.02);
}

TEST(Masking, GatherScatterRoundTrip) {
  Rng rng(5, "mask");
  const Volume v = random_volume({8, 8, 8}, rng);
  const auto p = patchify<float>(v, {2, 2, 2});
  const MaskPlan m = sample_mask(p.grid, 0.6, rng);
  const auto vis = gather_visible(p, m);
  EXPECT_EQ(vis.indices, m.visible);
  const auto mask_token = Tensor<float>::full({8}, -7.0f);
  const auto full = scatter_full(vis.tokens, mask_token, m);
  for (std::size_t i : m.visible)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(full.tokens.data()[i * 8 + j], p.tokens.data()[i * 8 + j]);
  for (std::size_t i : m.masked)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(full.tokens.data()[i * 8 + j], -7.0f);
}

TEST(Masking, ScatterRejectsWrongRowCount) {
  Rng rng(6, "mask");
  const auto grid = PatchGrid::make({4, 4, 4}, {2, 2, 2});
  const MaskPlan m = sample_mask(grid, 0.5, rng);
  EXPECT_THROW(scatter_full(Tensor<float>::zeros({3, 8}), Tensor<float>::zeros({8}), m), ContractError);
}

TEST(MaskedLoss, InvariantToVisibleTargets) {
  Rng rng(7, "loss");
  const auto grid = PatchGrid::make({8, 8, 8}, {2, 2, 2});
  const MaskPlan m = sample_mask(grid, 0.75, rng);
  const auto pred = random_tensor<double>({grid.count, 8}, rng);
  auto target = random_tensor<double>({grid.count, 8}, rng);
  const double base = masked_mse_loss(pred, target, m).item();
  std::vector<double> changed(target.data().begin(), target.data().end());
  for (std::size_t i : m.visible)
    for (std::size_t j = 0; j < 8; ++j) changed[i * 8 + j] += 100.0 * rng.normal();
  EXPECT_EQ(masked_mse_loss(pred, Tensor<double>::constant(target.shape(), changed), m).item(), base);
}

TEST(MaskedLoss, MatchesDirectMean) {
  Rng rng(8, "loss");
  const auto grid = PatchGrid::make({4, 4, 4}, {2, 2, 2});
  const MaskPlan m = sample_mask(grid, 0.5, rng);
  const auto pred = random_tensor<double>({grid.count, 8}, rng);
  const auto target = random_tensor<double>({grid.count, 8}, rng);
  double s = 0.0;
  for (std::size_t i : m.masked)
    for (std::size_t j = 0; j < 8; ++j) s += std::pow(pred.data()[i * 8 + j] - target.data()[i * 8 + j], 2);
  EXPECT_NEAR(masked_mse_loss(pred, target, m).item(), s / (m.masked.size() * 8.0), 1e-12);
}

TEST(MaskedLoss, NormalizedPatchesHaveZeroMeanUnitVariance) {
  Rng rng(9, "loss");
  const auto raw = random_tensor<double>({5, 27}, rng, 4.0);
  const auto n = normalize_patches(raw);
  for (std::size_t r = 0; r < 5; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 27; ++c) mu += n.data()[r * 27 + c];
    mu /= 27.0;
    for (std::size_t c = 0; c < 27; ++c) var += std::pow(n.data()[r * 27 + c] - mu, 2);
    EXPECT_NEAR(mu, 0.0, 1e-9);
    EXPECT_NEAR(var / 27.0, 1.0, 1e-4);
  }
}

}  // namespace
