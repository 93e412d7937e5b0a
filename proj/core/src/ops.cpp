#include "voxmae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "voxmae/error.hpp"

namespace voxmae::ops {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MapM = Eigen::Map<RowMatrix<T>>;

template <typename T>
Node<T>& parent(Node<T>& out, std::size_t i) {
  return *out.parents[i];
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                         " differ");
  }
}

template <typename T>
Tensor<T> elementwise_binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, int kind) {
  require_same_shape(op, a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = kind == 0 ? av[i] + bv[i] : kind == 1 ? av[i] - bv[i] : av[i] * bv[i];
  }
  return make_op<T>(op, a.shape(), std::move(out), {a, b}, [kind](Node<T>& o) {
    auto& pa = parent(o, 0);
    auto& pb = parent(o, 1);
    const auto& g = o.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      if (kind == 2) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb.value[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      if (kind == 2) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa.value[i];
      } else if (kind == 1) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("add", a, b, 0);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("sub", a, b, 1);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise_binary("mul", a, b, 2);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return make_op<T>("scale", x.shape(), std::move(out), {x}, [factor](Node<T>& o) {
    auto& gx = parent(o, 0).grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) +
                         " does not match last dim of " + to_string(x.shape()));
  }
  const std::size_t cols = bias.dim(0);
  const auto xv = x.data();
  const auto bv = bias.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % cols];
  return make_op<T>("add_bias", x.shape(), std::move(out), {x, bias}, [cols](Node<T>& o) {
    auto& px = parent(o, 0);
    auto& pb = parent(o, 1);
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % cols] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t kb = b.dim(b.rank() - 2);
  const std::size_t n = b.dim(b.rank() - 1);
  if (k != kb) {
    throw DimensionError("matmul: inner dims differ for shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  // Broadcast the leading (batch) dims, aligned from the right.
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  const std::size_t rank = std::max(a_batch.size(), b_batch.size());
  Shape batch(rank, 1);
  std::vector<std::size_t> a_ext(rank, 1), b_ext(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    if (i >= rank - a_batch.size()) a_ext[i] = a_batch[i - (rank - a_batch.size())];
    if (i >= rank - b_batch.size()) b_ext[i] = b_batch[i - (rank - b_batch.size())];
    if (a_ext[i] != b_ext[i] && a_ext[i] != 1 && b_ext[i] != 1) {
      throw DimensionError("matmul: batch dims of " + to_string(a.shape()) + " and " +
                           to_string(b.shape()) + " are not broadcastable");
    }
    batch[i] = std::max(a_ext[i], b_ext[i]);
  }
  const std::size_t batches = numel(batch);
  const auto a_strides = strides_of(a_ext);
  const auto b_strides = strides_of(b_ext);
  const auto out_strides = strides_of(batch);
  std::vector<std::size_t> a_index(batches), b_index(batches);
  for (std::size_t flat = 0; flat < batches; ++flat) {
    std::size_t rem = flat, ai = 0, bi = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      const std::size_t coord = rem / out_strides[d];
      rem %= out_strides[d];
      if (a_ext[d] != 1) ai += coord * a_strides[d];
      if (b_ext[d] != 1) bi += coord * b_strides[d];
    }
    a_index[flat] = ai;
    b_index[flat] = bi;
  }

  Shape out_shape = batch;
  if (a_batch.empty() && b_batch.empty()) out_shape.clear();
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batches * m * n);
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < batches; ++i) {
    MapM<T> c(out.data() + i * m * n, m, n);
    c.noalias() = MapC<T>(ap + a_index[i] * m * k, m, k) * MapC<T>(bp + b_index[i] * k * n, k, n);
  }
  return make_op<T>(
      "matmul", std::move(out_shape), std::move(out), {a, b},
      [m, k, n, batches, a_index = std::move(a_index), b_index = std::move(b_index)](Node<T>& o) {
        auto& pa = parent(o, 0);
        auto& pb = parent(o, 1);
        for (std::size_t i = 0; i < batches; ++i) {
          MapC<T> g(o.grad.data() + i * m * n, m, n);
          if (pa.requires_grad) {
            MapM<T> ga(pa.grad_buffer().data() + a_index[i] * m * k, m, k);
            ga.noalias() += g * MapC<T>(pb.value.data() + b_index[i] * k * n, k, n).transpose();
          }
          if (pb.requires_grad) {
            MapM<T> gb(pb.grad_buffer().data() + b_index[i] * k * n, k, n);
            gb.noalias() += MapC<T>(pa.value.data() + a_index[i] * m * k, m, k).transpose() * g;
          }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (x.rank() == 0 || weight.rank() != 2 || weight.dim(0) != x.shape().back()) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t outd = weight.dim(1);
  if (bias && (bias->rank() != 1 || bias->dim(0) != outd)) {
    throw DimensionError("linear: bias " + to_string(bias->shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outd;
  std::vector<T> out(rows * outd);
  MapM<T> y(out.data(), rows, outd);
  y.noalias() = MapC<T>(x.data().data(), rows, in) * MapC<T>(weight.data().data(), in, outd);
  if (bias) {
    const auto bv = bias->data();
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = out.data() + r * outd;
      for (std::size_t c = 0; c < outd; ++c) row[c] += bv[c];
    }
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_op<T>("linear", std::move(out_shape), std::move(out), inputs,
                    [rows, in, outd](Node<T>& o) {
                      auto& px = parent(o, 0);
                      auto& pw = parent(o, 1);
                      MapC<T> g(o.grad.data(), rows, outd);
                      if (px.requires_grad) {
                        MapM<T> gx(px.grad_buffer().data(), rows, in);
                        gx.noalias() += g * MapC<T>(pw.value.data(), in, outd).transpose();
                      }
                      if (pw.requires_grad) {
                        MapM<T> gw(pw.grad_buffer().data(), in, outd);
                        gw.noalias() += MapC<T>(px.value.data(), rows, in).transpose() * g;
                      }
                      if (o.parents.size() > 2 && o.parents[2]->requires_grad) {
                        auto& gb = o.parents[2]->grad_buffer();
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* row = o.grad.data() + r * outd;
                          for (std::size_t c = 0; c < outd; ++c) gb[c] += row[c];
                        }
                      }
                    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& o) {
    auto& gx = parent(o, 0).grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t rank = x.rank();
  if (axes.size() != rank) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for tensor " +
                         to_string(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw DimensionError("permute: invalid axis list");
    seen[a] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.dim(axes[i]);
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) src_stride[i] = in_strides[axes[i]];

  // Source offset for every output element; reused by backward.
  const std::size_t total = x.numel();
  std::vector<std::size_t> source(total);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    source[flat] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      offset += src_stride[d];
      if (counter[d] < out_shape[d]) break;
      offset -= src_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  const auto xv = x.data();
  std::vector<T> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[source[i]];
  return make_op<T>("permute", std::move(out_shape), std::move(out), {x},
                    [source = std::move(source)](Node<T>& o) {
                      auto& gx = parent(o, 0).grad_buffer();
                      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[source[i]] += o.grad[i];
                    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2) throw DimensionError("transpose: rank < 2 for " + to_string(x.shape()));
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         to_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  return make_op<T>("softmax", x.shape(), std::move(out), {x}, [outer, inner, len](Node<T>& o) {
    auto& gx = parent(o, 0).grad_buffer();
    const auto& y = o.value;
    const auto& g = o.grad;
    for (std::size_t ou = 0; ou < outer; ++ou) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw ParameterError("layer_norm: eps must be positive");
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + "/beta " +
                         to_string(beta.shape()) + " do not match last dim of " +
                         to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= T(n);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (row[j] - mu) * rs;
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_op<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& o) {
        auto& px = parent(o, 0);
        auto& pg = parent(o, 1);
        auto& pb = parent(o, 2);
        const auto& g = o.grad;
        if (pg.requires_grad) {
          auto& gg = pg.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
        }
        if (px.requires_grad) {
          auto& gx = px.grad_buffer();
          const auto& gam = pg.value;
          for (std::size_t r = 0; r < rows; ++r) {
            T s1 = 0, s2 = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gam[j];
              s1 += d;
              s2 += d * xhat[r * n + j];
            }
            const T scale_r = rstd[r] / T(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gam[j];
              gx[r * n + j] += scale_r * (T(n) * d - s1 - xhat[r * n + j] * s2);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v)));
  }
  return make_op<T>("gelu", x.shape(), std::move(out), {x}, [](Node<T>& o) {
    auto& px = parent(o, 0);
    auto& gx = px.grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const T v = px.value[i];
      const T t = std::tanh(k * (v + c * v * v * v));
      const T dt = (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
      gx[i] += o.grad[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * dt);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  long double total = 0.0L;
  for (T v : x.data()) total += v;
  return make_op<T>("sum", Shape{}, std::vector<T>{static_cast<T>(total)}, {x}, [](Node<T>& o) {
    auto& gx = parent(o, 0).grad_buffer();
    const T g = o.grad[0];
    for (auto& v : gx) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  long double total = 0.0L;
  for (T v : x.data()) total += v;
  const T inv = T(1) / T(x.numel());
  const T value = static_cast<T>(total / static_cast<long double>(x.numel()));
  return make_op<T>("mean", Shape{}, std::vector<T>{value}, {x}, [inv](Node<T>& o) {
    auto& gx = parent(o, 0).grad_buffer();
    const T g = o.grad[0] * inv;
    for (auto& v : gx) v += g;
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows) {
  if (x.rank() == 0) throw DimensionError("gather_rows: scalar input");
  const std::size_t count = x.dim(0);
  const std::size_t width = count ? x.numel() / count : 0;
  for (auto r : rows) {
    if (r >= count) {
      throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range for " +
                           to_string(x.shape()));
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  std::vector<T> out(rows.size() * width);
  const T* src = x.data().data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src + rows[i] * width, width, out.data() + i * width);
  }
  return make_op<T>("gather_rows", std::move(out_shape), std::move(out), {x},
                    [width, index = std::vector<std::size_t>(rows.begin(), rows.end())](Node<T>& o) {
                      auto& gx = parent(o, 0).grad_buffer();
                      for (std::size_t i = 0; i < index.size(); ++i) {
                        T* dst = gx.data() + index[i] * width;
                        const T* g = o.grad.data() + i * width;
                        for (std::size_t j = 0; j < width; ++j) dst[j] += g[j];
                      }
                    });
}

template <typename T>
Tensor<T> gather_elements(const Tensor<T>& x, std::span<const std::size_t> index, Shape shape) {
  if (numel(shape) != index.size()) {
    throw DimensionError("gather_elements: " + std::to_string(index.size()) +
                         " indices for output shape " + to_string(shape));
  }
  const auto xv = x.data();
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) {
      throw DimensionError("gather_elements: index " + std::to_string(index[i]) +
                           " out of range for " + to_string(x.shape()));
    }
    out[i] = xv[index[i]];
  }
  return make_op<T>("gather_elements", std::move(shape), std::move(out), {x},
                    [idx = std::vector<std::size_t>(index.begin(), index.end())](Node<T>& o) {
                      auto& gx = parent(o, 0).grad_buffer();
                      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += o.grad[i];
                    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    const T* src = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * w, w, out.data() + o * out_row + col);
    }
    widths.push_back(w);
    col += w;
  }
  return make_op<T>("concat", std::move(out_shape), std::move(out), parts,
                    [outer, out_row, widths = std::move(widths)](Node<T>& o) {
                      std::size_t offset = 0;
                      for (std::size_t i = 0; i < widths.size(); ++i) {
                        auto& p = *o.parents[i];
                        if (p.requires_grad) {
                          auto& g = p.grad_buffer();
                          for (std::size_t r = 0; r < outer; ++r) {
                            const T* src = o.grad.data() + r * out_row + offset;
                            T* dst = g.data() + r * widths[i];
                            for (std::size_t j = 0; j < widths[i]; ++j) dst[j] += src[j];
                          }
                        }
                        offset += widths[i];
                      }
                    });
}

template <typename T>
Tensor<T> argmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw DimensionError("argmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  const auto xv = x.data();
  std::vector<T> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < len; ++j) {
        if (xv[o * len * inner + j * inner + in] > xv[o * len * inner + best * inner + in]) best = j;
      }
      out[o * inner + in] = static_cast<T>(best);
    }
  }
  auto result = make_op<T>("argmax", std::move(out_shape), std::move(out), {x}, [](Node<T>&) {});
  result.node()->differentiable = false;
  return result;
}

#define VOXMAE_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);             \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);               \
  template Tensor<T> transpose(const Tensor<T>&);                                              \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);              \
  template Tensor<T> gather_elements(const Tensor<T>&, std::span<const std::size_t>, Shape);   \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                       \
  template Tensor<T> argmax(const Tensor<T>&, std::size_t);

VOXMAE_INSTANTIATE_OPS(float)
VOXMAE_INSTANTIATE_OPS(double)

#undef VOXMAE_INSTANTIATE_OPS

}  // namespace voxmae::ops
