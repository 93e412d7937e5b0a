#pragma once

#include <functional>
#include <span>

#include "voxmae/tensor.hpp"

namespace voxmae {

using ScalarFunction = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

/// Largest relative error between reverse-mode gradients of `f` and central
/// differences with step `eps`, over every coordinate of every input.
/// Relative error is |a - n| / max(|a|, |n|, 1e-12).
///
/// Inputs must be double-precision leaves created with Tensor::parameter; they
/// are perturbed in place and restored. Throws ContractError when `f` does not
/// return a scalar or its graph contains a non-differentiable op.
double grad_check(const ScalarFunction& f, std::span<Tensor<double>> inputs, double eps = 1e-5);

}  // namespace voxmae
