#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "voxmae/error.hpp"
#include "voxmae/gradcheck.hpp"
#include "voxmae/ops.hpp"

namespace {

using namespace voxmae;
using voxmae::testing::random_param;
using voxmae::testing::random_tensor;

TEST(Tensor, ConstantRejectsWrongValueCount) {
  EXPECT_THROW(Tensor<float>::constant({2, 3}, std::vector<float>(5)), DimensionError);
}

TEST(Tensor, ItemNeedsSingleElement) {
  EXPECT_EQ(Tensor<double>::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor<double>::zeros({2}).item(), ContractError);
}

TEST(Tensor, OpOutputsAreImmutable) {
  Rng rng(0, "t");
  auto a = random_param<double>({2, 2}, rng);
  auto b = ops::add(a, a);
  EXPECT_THROW(b.mutable_data(), ContractError);
}

TEST(Tensor, NonFiniteOutputIsRejected) {
  auto x = Tensor<double>::constant({2}, {1.0, std::numeric_limits<double>::infinity()});
  EXPECT_THROW(ops::scale(x, 2.0), NumericError);
}

TEST(Tensor, NoGradGuardStopsRecording) {
  Rng rng(0, "t");
  auto a = random_param<double>({3}, rng);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(ops::sum(a).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(ops::sum(a).requires_grad());
}

TEST(Tensor, BackwardNeedsScalar) {
  Rng rng(0, "t");
  auto a = random_param<double>({3}, rng);
  EXPECT_THROW(backward(ops::scale(a, 2.0)), ContractError);
}

TEST(Tensor, GradientAccumulatesOverSharedUses) {
  // f = sum(a * a + a) => df/da = 2a + 1
  Rng rng(1, "t");
  auto a = random_param<double>({4}, rng);
  auto loss = ops::sum(ops::add(ops::mul(a, a), a));
  auto g = backward(loss).of(a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.data()[i], 2.0 * a.data()[i] + 1.0);
}

TEST(Tensor, BackwardTwiceGivesSameGradient) {
  Rng rng(2, "t");
  auto a = random_param<double>({3, 3}, rng);
  auto loss = ops::sum(ops::matmul(a, a));
  auto g1 = backward(loss).of(a);
  auto g2 = backward(loss).of(a);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(g1.data()[i], g2.data()[i]);
}

TEST(Tensor, DetachCutsTheGraph) {
  Rng rng(3, "t");
  auto a = random_param<double>({3}, rng);
  auto d = ops::scale(a, 2.0).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(backward(ops::sum(ops::mul(a, d))).of(a).data()[0], d.data()[0]);
}

TEST(Tensor, DeepChainDoesNotOverflow) {
  Rng rng(4, "t");
  auto a = random_param<double>({2}, rng);
  auto x = a;
  for (int i = 0; i < 20000; ++i) x = ops::scale(x, 1.0);
  auto g = backward(ops::sum(x)).of(a);
  EXPECT_EQ(g.data()[0], 1.0);
}

TEST(GradCheck, RefusesNonDifferentiableGraphs) {
  Rng rng(5, "t");
  std::vector<Tensor<double>> in{random_param<double>({2, 3}, rng)};
  auto g = [](std::span<const Tensor<double>> x) {
    return ops::sum(ops::matmul(ops::transpose(ops::reshape(ops::argmax(x[0], 1), {2, 1})), x[0]));
  };
  EXPECT_THROW(grad_check(g, in), ContractError);
}

TEST(GradCheck, DetectsAWrongBackward) {
  // A hand-built op whose backward is off by a factor of two.
  Rng rng(6, "t");
  std::vector<Tensor<double>> in{random_param<double>({3}, rng)};
  auto f = [](std::span<const Tensor<double>> x) {
    const auto& a = x[0];
    std::vector<double> v(a.data().begin(), a.data().end());
    Tensor<double> y = make_op<double>("bad_identity", a.shape(), v, {a}, [a](Node<double>& out) {
      auto& g = a.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * out.grad[i];
    });
    return ops::sum(ops::mul(y, y));
  };
  EXPECT_GT(grad_check(f, in), 0.1);
}

}  // namespace
