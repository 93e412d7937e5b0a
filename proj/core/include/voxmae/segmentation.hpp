#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "voxmae/checkpoint.hpp"
#include "voxmae/metrics.hpp"
#include "voxmae/optimizer.hpp"
#include "voxmae/parameters.hpp"
#include "voxmae/patching.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/transformer.hpp"

namespace voxmae {

struct SegConfig {
  Extents patch{4, 4, 4};
  /// Must equal the pretraining encoder for transfer.
  EncoderConfig encoder;
  std::size_t num_classes = 3;
  std::size_t epochs = 40;
  std::size_t batch_size = 1;
  OptimizerConfig optimizer{5e-4, 1e-6, 0.05, 0.9, 0.999, 1e-8, 5, 1.0};
  double dice_weight = 1.0;
  double ce_weight = 1.0;
  double dice_eps = 1e-5;
  bool freeze_encoder = false;
  /// "scratch" or "checkpoint:<path>".
  std::string init = "scratch";
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SegConfig&) const = default;
};

/// w_ce * mean voxel cross-entropy + w_dice * (1 - mean over classes of soft
/// Dice), soft Dice_c = (2 Σ p_c g_c + eps) / (Σ p_c + Σ g_c + eps), p the
/// class-axis softmax of `logits` (C x D x H x W). Throws DataError on a label >= C.
template <typename T>
Tensor<T> dice_ce_loss(const Tensor<T>& logits, const LabelMap& labels, double dice_weight = 1.0,
                       double ce_weight = 1.0, double eps = 1e-5);

/// Class-axis softmax of C x D x H x W logits (no graph).
template <typename T>
std::vector<T> class_probabilities(const Tensor<T>& logits);

/// Argmax over the class axis of C x D x H x W logits.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits);

/// Encoder shared with pretraining ("encoder.*") plus a U-shaped decoder
/// ("seg.*"): per level a patch expand, skip concatenation, linear fuse and
/// one transformer block, then a head to C * patch_dim per stage-0 token.
template <typename T>
class SegModel : public Segmenter {
 public:
  SegModel(const SegConfig& config, const Extents& volume, std::uint64_t seed);

  /// Encoder features of a normalized volume.
  StageFeatures<T> encode(const Volume& normalized) const;
  /// C x D x H x W logits. With `zero_skips` every skip contributes zeros.
  Tensor<T> decode(const StageFeatures<T>& features, bool zero_skips = false) const;
  Tensor<T> forward(const Volume& normalized) const { return decode(encode(normalized)); }

  /// Normalizes `volume` and returns the argmax labels.
  LabelMap predict(const Volume& volume) const override;
  std::size_t num_classes() const override { return config_.num_classes; }

  const SegConfig& config() const { return config_; }
  const PatchGrid& grid() const { return grid_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

 private:
  struct Level {
    PatchExpand<T> expand;
    Linear<T> fuse;
    TransformerBlock<T> block;
  };

  SegConfig config_;
  PatchGrid grid_;
  std::vector<Extents> grids_;
  ParameterStore<T> store_;
  Encoder<T> encoder_;
  Tensor<T> pos_;
  std::vector<Level> levels_;  // levels_[s] produces stage s from stage s+1
  LayerNorm<T> norm_;
  Linear<T> head_;
};

struct TransferReport {
  std::vector<std::string> transferred;
  std::vector<std::string> warnings;
};

/// Copies every encoder parameter of `model` from `c`. Throws TransferError
/// on an encoder fingerprint mismatch, naming the first incompatible
/// parameter when one exists. A provenance other than mae-pretrained only
/// adds a warning.
template <typename T>
TransferReport transfer_encoder(const Checkpoint& c, SegModel<T>& model);

struct FinetuneResult {
  Checkpoint checkpoint;
  std::vector<double> train_loss;
  std::vector<double> val_dice;
  TransferReport transfer;
};

using FinetuneCallback = std::function<void(std::size_t epoch, double loss, double val_dice)>;

/// Trains the whole network on `train_items` (the full train-labeled split
/// when empty), validating each epoch. `init` null means scratch.
/// Throws ConfigError on empty train or validation sets.
FinetuneResult finetune(const Dataset& dataset, const SegConfig& config, const Checkpoint* init,
                        const std::vector<std::size_t>& train_items = {},
                        const FinetuneCallback& on_epoch = {});

/// Resolves config.init ("scratch" or "checkpoint:<path>") and trains on the full split.
FinetuneResult finetune(const Dataset& dataset, const SegConfig& config,
                        const FinetuneCallback& on_epoch = {});

}  // namespace voxmae
