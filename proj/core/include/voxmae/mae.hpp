#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "voxmae/checkpoint.hpp"
#include "voxmae/optimizer.hpp"
#include "voxmae/parameters.hpp"
#include "voxmae/patching.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/transformer.hpp"

namespace voxmae {

struct MaeConfig {
  Extents patch{4, 4, 4};
  EncoderConfig encoder;
  double mask_ratio = 0.75;
  /// Must be a multiple of 6 (positional encoding).
  std::size_t decoder_dim = 48;
  std::size_t decoder_depth = 2;
  std::size_t decoder_heads = 4;
  std::size_t epochs = 30;
  std::size_t batch_size = 4;
  OptimizerConfig optimizer{1e-3, 1e-5, 0.05, 0.9, 0.95, 1e-8, 5, 1.0};
  /// Per-patch target normalization (zero mean, unit variance per token).
  bool normalize_targets = false;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const MaeConfig&) const = default;
};

/// Mean squared error over the masked tokens only, divided by |masked| * patch_dim.
template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& target, const MaskPlan& m);

/// Each target row shifted to zero mean and scaled to unit variance (eps 1e-6).
template <typename T>
Tensor<T> normalize_patches(const Tensor<T>& raw);

/// Encoder over visible tokens plus a lightweight global-attention decoder.
/// Encoder parameters are named "encoder.*", decoder parameters "mae.*".
template <typename T>
class MaeModel {
 public:
  MaeModel(const MaeConfig& config, const Extents& volume, std::uint64_t seed);

  struct Output {
    PatchSequence<T> reconstruction;
    Tensor<T> target;
    Tensor<T> loss;
  };

  /// Reconstruction of every patch of the normalized volume `v` given mask `m`.
  /// Throws ContractError when the volume or mask grid differs from the model's.
  Output forward(const Volume& v, const MaskPlan& m) const;

  const MaeConfig& config() const { return config_; }
  const PatchGrid& grid() const { return grid_; }
  const Encoder<T>& encoder() const { return encoder_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 private:
  MaeConfig config_;
  PatchGrid grid_;
  ParameterStore<T> store_;
  Encoder<T> encoder_;
  Linear<T> bridge_;
  Tensor<T> mask_token_;
  std::vector<TransformerBlock<T>> decoder_;
  LayerNorm<T> decoder_norm_;
  Linear<T> head_;
  Tensor<T> encoder_pos_;
  Tensor<T> decoder_pos_;
};

/// Forward pass over a batch sharing one grid; the loss is the item mean,
/// reduced in item order.
template <typename T>
struct MaeBatch {
  std::vector<PatchSequence<T>> reconstructions;
  Tensor<T> loss;
};

template <typename T>
MaeBatch<T> mae_forward(const std::vector<Volume>& batch, const std::vector<MaskPlan>& masks,
                        const MaeModel<T>& model);

/// Mask of pretraining item `item` at 1-based `epoch`, drawn from stream
/// "mae/mask/<epoch>/<item>" under the config seed.
MaskPlan pretrain_mask(const MaeConfig& config, const PatchGrid& grid, std::size_t epoch,
                       std::size_t item);

/// Hash of the encoder-side architecture shared by pretraining and segmentation.
std::string encoder_fingerprint(const EncoderConfig& encoder, const Extents& patch);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_curve;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Masked-reconstruction pretraining on the pretrain-unlabeled split.
/// Throws ConfigError when the split is empty.
PretrainResult pretrain(const Dataset& dataset, const MaeConfig& config,
                        const EpochCallback& on_epoch = {});

}  // namespace voxmae
