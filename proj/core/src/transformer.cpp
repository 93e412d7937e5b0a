#include "voxmae/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "voxmae/error.hpp"
#include "voxmae/ops.hpp"

namespace voxmae {

const char* to_string(AttentionKind kind) {
  return kind == AttentionKind::Local ? "local" : "global";
}

void EncoderConfig::validate() const {
  const std::size_t n = dims.size();
  if (n == 0) throw ConfigError("encoder: at least one stage is required");
  if (depths.size() != n || heads.size() != n || kinds.size() != n) {
    throw ConfigError("encoder: dims, depths, heads and kinds must have one entry per stage");
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (dims[s] == 0 || depths[s] == 0 || heads[s] == 0) {
      throw ConfigError("encoder: stage " + std::to_string(s) + " has a zero dim/depth/heads");
    }
    if (dims[s] % heads[s] != 0) {
      throw ConfigError("encoder: stage " + std::to_string(s) + " heads " +
                        std::to_string(heads[s]) + " do not divide dim " + std::to_string(dims[s]));
    }
    if (s + 1 < n && dims[s + 1] != 2 * dims[s]) {
      throw ConfigError("encoder: stage " + std::to_string(s + 1) + " dim must double stage " +
                        std::to_string(s) + " dim");
    }
  }
  if (kinds.back() != AttentionKind::Global) {
    throw ConfigError("encoder: the final stage must use global attention");
  }
  if (mlp_ratio == 0) throw ConfigError("encoder: mlp_ratio must be positive");
  for (auto w : window) {
    if (w == 0) throw ConfigError("encoder: window extents must be positive");
  }
}

std::vector<Extents> EncoderConfig::stage_grids(const Extents& grid0) const {
  std::vector<Extents> grids{grid0};
  for (std::size_t s = 1; s < stages(); ++s) {
    const Extents& prev = grids.back();
    grids.push_back({prev[0] / 2, prev[1] / 2, prev[2] / 2});
  }
  return grids;
}

void EncoderConfig::validate_grid(const Extents& grid0) const {
  validate();
  const auto grids = stage_grids(grid0);
  for (std::size_t s = 0; s < stages(); ++s) {
    const Extents& g = grids[s];
    if (s + 1 < stages()) {
      for (auto e : g) {
        if (e % 2 != 0 || e == 0) {
          throw ConfigError("encoder: stage " + std::to_string(s) + " grid " + to_string(g) +
                            " has an odd extent; patch merging needs even extents");
        }
      }
    }
    if (kinds[s] == AttentionKind::Local) {
      for (std::size_t a = 0; a < 3; ++a) {
        if (g[a] % window[a] != 0) {
          throw ConfigError("encoder: window " + to_string(window) + " does not divide stage " +
                            std::to_string(s) + " grid " + to_string(g));
        }
      }
    }
  }
}

TokenSet TokenSet::full(const Extents& grid) {
  TokenSet set;
  set.grid = grid;
  set.cells.resize(grid[0] * grid[1] * grid[2]);
  std::iota(set.cells.begin(), set.cells.end(), std::size_t{0});
  return set;
}

WindowPartition WindowPartition::global(std::size_t tokens) {
  WindowPartition p;
  p.windows = 1;
  p.tokens_per_window = tokens;
  p.order.resize(tokens);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  p.inverse = p.order;
  p.identity = true;
  return p;
}

WindowPartition WindowPartition::local(const Extents& grid, const Extents& window) {
  Extents wgrid{};
  for (std::size_t a = 0; a < 3; ++a) {
    if (window[a] == 0 || grid[a] % window[a] != 0) {
      throw ConfigError("window " + to_string(window) + " does not divide grid " + to_string(grid));
    }
    wgrid[a] = grid[a] / window[a];
  }
  WindowPartition p;
  p.windows = wgrid[0] * wgrid[1] * wgrid[2];
  p.tokens_per_window = window[0] * window[1] * window[2];
  p.order.reserve(p.windows * p.tokens_per_window);
  for (std::size_t wz = 0; wz < wgrid[0]; ++wz)
    for (std::size_t wy = 0; wy < wgrid[1]; ++wy)
      for (std::size_t wx = 0; wx < wgrid[2]; ++wx)
        for (std::size_t lz = 0; lz < window[0]; ++lz)
          for (std::size_t ly = 0; ly < window[1]; ++ly)
            for (std::size_t lx = 0; lx < window[2]; ++lx) {
              const std::size_t z = wz * window[0] + lz;
              const std::size_t y = wy * window[1] + ly;
              const std::size_t x = wx * window[2] + lx;
              p.order.push_back((z * grid[1] + y) * grid[2] + x);
            }
  p.inverse.resize(p.order.size());
  for (std::size_t i = 0; i < p.order.size(); ++i) p.inverse[p.order[i]] = i;
  p.identity = std::is_sorted(p.order.begin(), p.order.end());
  return p;
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
                  std::size_t out, bool with_bias)
    : weight(store.create(name + ".weight", {in, out}, Init::Normal002)) {
  if (with_bias) bias = store.create(name + ".bias", {out}, Init::Zeros);
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ops::linear(x, weight, bias.defined() ? &bias : nullptr);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim)
    : gamma(store.create(name + ".gamma", {dim}, Init::Ones)),
      beta(store.create(name + ".beta", {dim}, Init::Zeros)) {}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ops::layer_norm(x, gamma, beta, T(1e-5));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParameterStore<T>& store, const std::string& name,
                                          std::size_t dim, std::size_t heads)
    : dim_(dim), heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention '" + name + "': heads " + std::to_string(heads) +
                      " do not divide dim " + std::to_string(dim));
  }
  q_ = Linear<T>(store, name + ".q", dim, dim, false);
  k_ = Linear<T>(store, name + ".k", dim, dim, false);
  v_ = Linear<T>(store, name + ".v", dim, dim, false);
  out_ = Linear<T>(store, name + ".out", dim, dim, true);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& x,
                                            const WindowPartition& partition) const {
  if (x.rank() != 2 || x.dim(1) != dim_) {
    throw DimensionError("attention: expected N x " + std::to_string(dim_) + " tokens, got " +
                         to_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  if (partition.windows * partition.tokens_per_window != n) {
    throw ContractError("attention: window partition covers " +
                        std::to_string(partition.windows * partition.tokens_per_window) +
                        " tokens, input has " + std::to_string(n));
  }
  const std::size_t w = partition.windows;
  const std::size_t t = partition.tokens_per_window;
  const std::size_t dh = dim_ / heads_;
  const Tensor<T> xw = partition.identity ? x : ops::gather_rows(x, partition.order);

  const Tensor<T> q = ops::permute(ops::reshape(q_(xw), {w, t, heads_, dh}), {0, 2, 1, 3});
  const Tensor<T> kt = ops::permute(ops::reshape(k_(xw), {w, t, heads_, dh}), {0, 2, 3, 1});
  const Tensor<T> v = ops::permute(ops::reshape(v_(xw), {w, t, heads_, dh}), {0, 2, 1, 3});
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Tensor<T> scores = ops::matmul(ops::scale(q, scale), kt);  // w x h x t x t
  const Tensor<T> weights = ops::softmax(scores, 3);
  const Tensor<T> mixed = ops::matmul(weights, v);  // w x h x t x dh
  const Tensor<T> merged = ops::reshape(ops::permute(mixed, {0, 2, 1, 3}), {n, dim_});
  const Tensor<T> projected = out_(merged);
  return partition.identity ? projected : ops::gather_rows(projected, partition.inverse);
}

template <typename T>
TransformerBlock<T>::TransformerBlock(ParameterStore<T>& store, const std::string& name,
                                      std::size_t dim, std::size_t heads, std::size_t mlp_ratio)
    : norm1_(store, name + ".norm1", dim),
      norm2_(store, name + ".norm2", dim),
      attn_(store, name + ".attn", dim, heads),
      fc1_(store, name + ".mlp.fc1", dim, dim * mlp_ratio),
      fc2_(store, name + ".mlp.fc2", dim * mlp_ratio, dim) {}

template <typename T>
Tensor<T> TransformerBlock<T>::operator()(const Tensor<T>& x,
                                          const WindowPartition& partition) const {
  const Tensor<T> h = ops::add(x, attn_(norm1_(x), partition));
  return ops::add(h, fc2_(ops::gelu(fc1_(norm2_(h)))));
}

template <typename T>
PatchMerge<T>::PatchMerge(ParameterStore<T>& store, const std::string& name, std::size_t dim)
    : dim_(dim),
      norm_(store, name + ".norm", 8 * dim),
      reduce_(store, name + ".reduce", 8 * dim, 2 * dim, false) {}

template <typename T>
Tensor<T> PatchMerge<T>::operator()(const Tensor<T>& x, const TokenSet& in, TokenSet& out) const {
  if (x.rank() != 2 || x.dim(0) != in.cells.size() || x.dim(1) != dim_) {
    throw DimensionError("patch merge: expected " + std::to_string(in.cells.size()) + " x " +
                         std::to_string(dim_) + " tokens, got " + to_string(x.shape()));
  }
  for (auto e : in.grid) {
    if (e % 2 != 0 || e == 0) {
      throw ConfigError("patch merge: grid " + to_string(in.grid) + " has an odd extent");
    }
  }
  const Extents& g = in.grid;
  const Extents coarse{g[0] / 2, g[1] / 2, g[2] / 2};
  constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> row_of(in.grid_size(), kAbsent);
  for (std::size_t i = 0; i < in.cells.size(); ++i) row_of[in.cells[i]] = i;

  out.grid = coarse;
  out.cells.clear();
  for (std::size_t c = 0; c < coarse[0] * coarse[1] * coarse[2]; ++c) {
    const std::size_t cz = c / (coarse[1] * coarse[2]);
    const std::size_t cy = (c / coarse[2]) % coarse[1];
    const std::size_t cx = c % coarse[2];
    bool any = false;
    for (std::size_t k = 0; k < 8 && !any; ++k) {
      const std::size_t f = ((2 * cz + k / 4) * g[1] + 2 * cy + (k / 2) % 2) * g[2] + 2 * cx + k % 2;
      any = row_of[f] != kAbsent;
    }
    if (any) out.cells.push_back(c);
  }

  const std::size_t zero_row = in.cells.size();
  std::vector<std::size_t> source;
  source.reserve(out.cells.size() * 8);
  for (std::size_t c : out.cells) {
    const std::size_t cz = c / (coarse[1] * coarse[2]);
    const std::size_t cy = (c / coarse[2]) % coarse[1];
    const std::size_t cx = c % coarse[2];
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t f = ((2 * cz + k / 4) * g[1] + 2 * cy + (k / 2) % 2) * g[2] + 2 * cx + k % 2;
      source.push_back(row_of[f] == kAbsent ? zero_row : row_of[f]);
    }
  }
  const Tensor<T> table = ops::concat<T>({x, Tensor<T>::zeros({1, dim_})}, 0);
  const Tensor<T> grouped =
      ops::reshape(ops::gather_rows(table, source), {out.cells.size(), 8 * dim_});
  return reduce_(norm_(grouped));
}

template <typename T>
PatchExpand<T>::PatchExpand(ParameterStore<T>& store, const std::string& name, std::size_t dim)
    : dim_(dim) {
  if (dim % 2 != 0) throw ConfigError("patch expand: dim " + std::to_string(dim) + " is odd");
  expand_ = Linear<T>(store, name + ".expand", dim, 8 * (dim / 2), false);
}

template <typename T>
Tensor<T> PatchExpand<T>::operator()(const Tensor<T>& x, const Extents& coarse) const {
  const std::size_t m = coarse[0] * coarse[1] * coarse[2];
  if (x.rank() != 2 || x.dim(0) != m || x.dim(1) != dim_) {
    throw DimensionError("patch expand: expected " + std::to_string(m) + " x " +
                         std::to_string(dim_) + " tokens, got " + to_string(x.shape()));
  }
  const std::size_t half = dim_ / 2;
  const Tensor<T> children = ops::reshape(expand_(x), {m * 8, half});
  const Extents fine{coarse[0] * 2, coarse[1] * 2, coarse[2] * 2};
  std::vector<std::size_t> source(m * 8);
  for (std::size_t z = 0; z < fine[0]; ++z)
    for (std::size_t y = 0; y < fine[1]; ++y)
      for (std::size_t xx = 0; xx < fine[2]; ++xx) {
        const std::size_t parent = ((z / 2) * coarse[1] + y / 2) * coarse[2] + xx / 2;
        const std::size_t child = (z % 2) * 4 + (y % 2) * 2 + xx % 2;
        source[(z * fine[1] + y) * fine[2] + xx] = parent * 8 + child;
      }
  return ops::gather_rows(children, source);
}

template <typename T>
Tensor<T> run_stage(const std::vector<TransformerBlock<T>>& blocks, const Tensor<T>& x,
                    const TokenSet& set, AttentionKind kind, const Extents& window) {
  const WindowPartition partition = (kind == AttentionKind::Local && set.is_full())
                                        ? WindowPartition::local(set.grid, window)
                                        : WindowPartition::global(set.cells.size());
  Tensor<T> h = x;
  for (const auto& block : blocks) h = block(h, partition);
  return h;
}

template <typename T>
Encoder<T>::Encoder(ParameterStore<T>& store, const std::string& prefix,
                    const EncoderConfig& config, std::size_t patch_dim)
    : config_(config) {
  config_.validate();
  patch_embed_ = Linear<T>(store, prefix + ".patch_embed", patch_dim, config_.dims[0]);
  for (std::size_t s = 0; s < config_.stages(); ++s) {
    std::vector<TransformerBlock<T>> stage;
    for (std::size_t b = 0; b < config_.depths[s]; ++b) {
      stage.emplace_back(store,
                         prefix + ".stages." + std::to_string(s) + ".blocks." + std::to_string(b),
                         config_.dims[s], config_.heads[s], config_.mlp_ratio);
    }
    blocks_.push_back(std::move(stage));
    if (s + 1 < config_.stages()) {
      merges_.emplace_back(store, prefix + ".merges." + std::to_string(s), config_.dims[s]);
    }
  }
}

template <typename T>
Tensor<T> Encoder<T>::embed(const Tensor<T>& raw) const {
  return patch_embed_(raw);
}

template <typename T>
StageFeatures<T> Encoder<T>::operator()(const Tensor<T>& tokens, const TokenSet& set) const {
  config_.validate_grid(set.grid);
  StageFeatures<T> features;
  Tensor<T> h = tokens;
  TokenSet current = set;
  for (std::size_t s = 0; s < config_.stages(); ++s) {
    h = run_stage(blocks_[s], h, current, config_.kinds[s], config_.window);
    features.tokens.push_back(h);
    features.sets.push_back(current);
    if (s + 1 < config_.stages()) {
      TokenSet next;
      h = merges_[s](h, current, next);
      current = std::move(next);
    }
  }
  return features;
}

#define VOXMAE_INSTANTIATE_TRANSFORMER(T)                                              \
  template struct Linear<T>;                                                           \
  template struct LayerNorm<T>;                                                        \
  template class MultiHeadAttention<T>;                                                \
  template class TransformerBlock<T>;                                                  \
  template class PatchMerge<T>;                                                        \
  template class PatchExpand<T>;                                                       \
  template class Encoder<T>;                                                           \
  template Tensor<T> run_stage<T>(const std::vector<TransformerBlock<T>>&, const Tensor<T>&, \
                                  const TokenSet&, AttentionKind, const Extents&);

VOXMAE_INSTANTIATE_TRANSFORMER(float)
VOXMAE_INSTANTIATE_TRANSFORMER(double)

#undef VOXMAE_INSTANTIATE_TRANSFORMER

}  // namespace voxmae
