#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "voxmae/diagnostics.hpp"
#include "voxmae/error.hpp"
#include "voxmae/gradcheck.hpp"
#include "voxmae/ops.hpp"

namespace {

using namespace voxmae;
using voxmae::testing::random_param;
using voxmae::testing::random_tensor;

TEST(OpGradients, EveryOpMatchesFiniteDifferences) {
  const auto results = op_gradient_checks(11);
  EXPECT_GE(results.size(), 20u);
  for (const auto& r : results) {
    EXPECT_LT(r.max_rel_error, 1e-6) << r.name;
  }
}

TEST(OpGradients, BroadcastMatmulGradient) {
  Rng rng(1, "ops");
  std::vector<Tensor<double>> in{random_param<double>({2, 3, 4, 5}, rng),
                                 random_param<double>({5, 2}, rng)};
  auto f = [](std::span<const Tensor<double>> x) {
    return ops::sum(ops::mul(ops::matmul(x[0], x[1]), ops::matmul(x[0], x[1])));
  };
  EXPECT_LT(grad_check(f, in), 1e-6);
}

TEST(Ops, MatmulMatchesNaiveProduct) {
  Rng rng(2, "ops");
  auto a = random_tensor<double>({3, 4, 5}, rng);
  auto b = random_tensor<double>({3, 5, 2}, rng);
  auto c = ops::matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 4, 2}));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) s += a.data()[n * 20 + i * 5 + k] * b.data()[n * 10 + k * 2 + j];
        EXPECT_NEAR(c.data()[n * 8 + i * 2 + j], s, 1e-12);
      }
}

TEST(Ops, MatmulRejectsMismatchedInnerDims) {
  Rng rng(3, "ops");
  EXPECT_THROW(ops::matmul(random_tensor<double>({2, 3}, rng), random_tensor<double>({4, 2}, rng)),
               DimensionError);
  EXPECT_THROW(ops::add(random_tensor<double>({2, 3}, rng), random_tensor<double>({3, 2}, rng)),
               DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneAndSurviveLargeInputs) {
  auto x = Tensor<double>::constant({2, 3}, {1000.0, 1001.0, 1002.0, -5.0, 0.0, 5.0});
  auto y = ops::softmax(x, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += y.data()[r * 3 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(y.data()[2], 1.0 / (1.0 + std::exp(-1.0) + std::exp(-2.0)), 1e-12);
}

TEST(Ops, LayerNormNormalizesEachRow) {
  Rng rng(4, "ops");
  auto x = random_tensor<double>({5, 16}, rng, 3.0);
  auto y = ops::layer_norm(x, Tensor<double>::full({16}, 1.0), Tensor<double>::zeros({16}));
  for (std::size_t r = 0; r < 5; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mu += y.data()[r * 16 + c];
    mu /= 16.0;
    for (std::size_t c = 0; c < 16; ++c) var += std::pow(y.data()[r * 16 + c] - mu, 2);
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var / 16.0, 1.0, 1e-4);
  }
}

TEST(Ops, GeluKnownValues) {
  auto y = ops::gelu(Tensor<double>::constant({3}, {0.0, 1.0, -1.0}));
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_NEAR(y.data()[1], 0.841192, 1e-6);
  EXPECT_NEAR(y.data()[2], -0.158808, 1e-6);
}

TEST(Ops, PermuteMatchesIndexArithmetic) {
  Rng rng(5, "ops");
  auto x = random_tensor<double>({2, 3, 4}, rng);
  auto y = ops::permute(x, {2, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{4, 2, 3}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(y.data()[(k * 2 + i) * 3 + j], x.data()[(i * 3 + j) * 4 + k]);
}

TEST(Ops, ConcatAndGatherRows) {
  Rng rng(6, "ops");
  auto a = random_tensor<double>({2, 3}, rng);
  auto b = random_tensor<double>({2, 2}, rng);
  auto c = ops::concat<double>({a, b}, 1);
  ASSERT_EQ(c.shape(), (Shape{2, 5}));
  EXPECT_EQ(c.data()[3], b.data()[0]);
  EXPECT_EQ(c.data()[5], a.data()[3]);
  const std::vector<std::size_t> rows{1, 1, 0};
  auto g = ops::gather_rows(a, rows);
  ASSERT_EQ(g.shape(), (Shape{3, 3}));
  EXPECT_EQ(g.data()[0], a.data()[3]);
  EXPECT_EQ(g.data()[8], a.data()[2]);
  const std::vector<std::size_t> bad{2};
  EXPECT_THROW(ops::gather_rows(a, bad), DimensionError);
}

TEST(Ops, GatherRowsRepeatedIndicesAccumulateGradient) {
  Rng rng(7, "ops");
  auto a = random_param<double>({3, 2}, rng);
  const std::vector<std::size_t> rows{0, 0, 2};
  auto g = backward(ops::sum(ops::gather_rows(a, rows))).of(a);
  EXPECT_EQ(g.data()[0], 2.0);
  EXPECT_EQ(g.data()[2], 0.0);
  EXPECT_EQ(g.data()[4], 1.0);
}

TEST(Ops, MeanOfConstantAndArgmax) {
  auto x = Tensor<double>::constant({2, 3}, {1, 5, 2, 9, 0, 3});
  EXPECT_DOUBLE_EQ(ops::mean(x).item(), 20.0 / 6.0);
  auto am = ops::argmax(x, 1);
  EXPECT_EQ(am.data()[0], 1.0);
  EXPECT_EQ(am.data()[1], 0.0);
}

}  // namespace
