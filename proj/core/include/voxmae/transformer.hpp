#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxmae/parameters.hpp"
#include "voxmae/tensor.hpp"
#include "voxmae/volume.hpp"

namespace voxmae {

enum class AttentionKind { Local, Global };

const char* to_string(AttentionKind kind);

/// Hierarchical encoder layout. Stage s runs depths[s] blocks at width dims[s]
/// with heads[s] heads; a patch merge halves the grid and doubles the width
/// between consecutive stages.
struct EncoderConfig {
  std::vector<std::size_t> dims{36, 72, 144};
  std::vector<std::size_t> depths{2, 2, 2};
  std::vector<std::size_t> heads{3, 6, 12};
  std::vector<AttentionKind> kinds{AttentionKind::Local, AttentionKind::Local,
                                   AttentionKind::Global};
  /// Window extents, in grid cells, used by every local stage.
  Extents window{2, 2, 2};
  std::size_t mlp_ratio = 4;

  std::size_t stages() const noexcept { return dims.size(); }

  /// Structural checks that do not depend on the input grid.
  void validate() const;
  /// Checks merges and windows against a concrete stage-0 grid.
  void validate_grid(const Extents& grid0) const;
  /// Grid extents of every stage for a stage-0 grid.
  std::vector<Extents> stage_grids(const Extents& grid0) const;

  bool operator==(const EncoderConfig&) const = default;
};

/// The cells of a stage grid that carry tokens, in ascending linear order.
/// Row i of a token tensor belongs to cells[i].
struct TokenSet {
  Extents grid{0, 0, 0};
  std::vector<std::size_t> cells;

  static TokenSet full(const Extents& grid);
  std::size_t grid_size() const noexcept { return grid[0] * grid[1] * grid[2]; }
  bool is_full() const noexcept { return cells.size() == grid_size(); }
};

/// Grouping of token rows into attention windows. `order` lists rows window
/// by window; `inverse` undoes it.
struct WindowPartition {
  std::size_t windows = 1;
  std::size_t tokens_per_window = 0;
  std::vector<std::size_t> order;
  std::vector<std::size_t> inverse;
  bool identity = true;

  static WindowPartition global(std::size_t tokens);
  /// Disjoint windows over a full grid; throws ConfigError unless `window`
  /// divides `grid` on every axis.
  static WindowPartition local(const Extents& grid, const Extents& window);
};

template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;  // undefined when the layer has no bias

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Scaled dot-product attention with learned bias-free q/k/v projections and
/// an output projection, applied independently inside each window.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                     std::size_t heads);

  /// x is N x dim. A global partition attends over all N tokens.
  Tensor<T> operator()(const Tensor<T>& x, const WindowPartition& partition) const;

  const Linear<T>& out_proj() const { return out_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear<T> q_, k_, v_, out_;
};

/// Pre-norm block: x + attn(ln(x)), then + mlp(ln(.)) with a GELU MLP.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                   std::size_t heads, std::size_t mlp_ratio);

  Tensor<T> operator()(const Tensor<T>& x, const WindowPartition& partition) const;

  const MultiHeadAttention<T>& attention() const { return attn_; }
  const Linear<T>& mlp_out() const { return fc2_; }

 private:
  LayerNorm<T> norm1_, norm2_;
  MultiHeadAttention<T> attn_;
  Linear<T> fc1_, fc2_;
};

/// Concatenates each 2x2x2 neighbourhood (8d), then layer norm and a
/// bias-free linear 8d -> 2d. On a partial token set, absent children
/// contribute zeros and a coarse cell exists when any child is present.
template <typename T>
class PatchMerge {
 public:
  PatchMerge() = default;
  PatchMerge(ParameterStore<T>& store, const std::string& name, std::size_t dim);

  Tensor<T> operator()(const Tensor<T>& x, const TokenSet& in, TokenSet& out) const;

 private:
  std::size_t dim_ = 0;
  LayerNorm<T> norm_;
  Linear<T> reduce_;
};

/// Linear d -> 8*(d/2) followed by a 2x2x2 upsample in grid space (full grids only).
template <typename T>
class PatchExpand {
 public:
  PatchExpand() = default;
  PatchExpand(ParameterStore<T>& store, const std::string& name, std::size_t dim);

  /// x holds tokens of the full `coarse` grid; the result covers the doubled grid.
  Tensor<T> operator()(const Tensor<T>& x, const Extents& coarse) const;

 private:
  std::size_t dim_ = 0;
  Linear<T> expand_;
};

/// Tokens and their cells for every stage; the last entry is the bottleneck.
template <typename T>
struct StageFeatures {
  std::vector<Tensor<T>> tokens;
  std::vector<TokenSet> sets;

  const Tensor<T>& bottleneck() const { return tokens.back(); }
};

/// Patch embedding plus the hierarchical stage stack. Parameter names are
/// "<prefix>.patch_embed.*", "<prefix>.stages.<s>.blocks.<b>.*" and
/// "<prefix>.merges.<s>.*".
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(ParameterStore<T>& store, const std::string& prefix, const EncoderConfig& config,
          std::size_t patch_dim);

  const EncoderConfig& config() const { return config_; }

  /// Raw patch tokens (N x patch_dim) to N x dims[0].
  Tensor<T> embed(const Tensor<T>& raw) const;

  /// Runs every stage on `tokens` (positions already added). Local stages use
  /// window attention when the token set covers its grid, global attention
  /// otherwise.
  StageFeatures<T> operator()(const Tensor<T>& tokens, const TokenSet& set) const;

 private:
  EncoderConfig config_;
  Linear<T> patch_embed_;
  std::vector<std::vector<TransformerBlock<T>>> blocks_;
  std::vector<PatchMerge<T>> merges_;
};

/// Applies one stage of blocks to `x` over `set`.
template <typename T>
Tensor<T> run_stage(const std::vector<TransformerBlock<T>>& blocks, const Tensor<T>& x,
                    const TokenSet& set, AttentionKind kind, const Extents& window);

}  // namespace voxmae
