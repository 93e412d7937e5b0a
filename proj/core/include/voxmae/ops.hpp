#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "voxmae/tensor.hpp"

/// Differentiable tensor operations. Every op validates shapes (DimensionError),
/// rejects non-finite outputs (NumericError) and records a backward closure when
/// any input requires a gradient.
namespace voxmae::ops {

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// x + b with b broadcast over every leading index (b has the size of x's last dim).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

/// Batched matrix product a[..., m, k] · b[..., k, n] with numpy-style
/// broadcasting over the leading dims.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x · w (+ bias) over the last dim of x; w is in × out.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias = nullptr);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
/// Swaps the last two dims.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes the last dim; biased variance; eps must be positive.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// tanh-approximation GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Rows of x (axis 0) in the order of `rows`; indices may repeat.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

/// Flat gather: out.flat[i] = x.flat[index[i]].
template <typename T>
Tensor<T> gather_elements(const Tensor<T>& x, std::span<const std::size_t> index, Shape shape);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Index of the maximum along `axis`, stored as T. Not differentiable: the
/// node is flagged so gradient checks refuse graphs that contain it.
template <typename T>
Tensor<T> argmax(const Tensor<T>& x, std::size_t axis);

}  // namespace voxmae::ops
