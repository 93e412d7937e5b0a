#include "voxmae/mae.hpp"

#include <cmath>
#include <numeric>

#include "voxmae/config.hpp"
#include "voxmae/error.hpp"
#include "voxmae/ops.hpp"

namespace voxmae {

void MaeConfig::validate() const {
  encoder.validate();
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw ConfigError("mae: mask_ratio must lie in (0, 1), got " + std::to_string(mask_ratio));
  }
  if (decoder_depth == 0) throw ConfigError("mae: decoder_depth must be at least 1");
  if (decoder_dim == 0 || decoder_dim % 6 != 0) {
    throw ConfigError("mae: decoder_dim must be a positive multiple of 6, got " +
                      std::to_string(decoder_dim));
  }
  if (decoder_heads == 0 || decoder_dim % decoder_heads != 0) {
    throw ConfigError("mae: decoder_heads must divide decoder_dim");
  }
  if (encoder.dims[0] % 6 != 0) {
    throw ConfigError("mae: encoder stage-0 dim must be a multiple of 6, got " +
                      std::to_string(encoder.dims[0]));
  }
  if (epochs == 0 || batch_size == 0) throw ConfigError("mae: epochs and batch_size must be positive");
  optimizer.validate();
}

template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& target, const MaskPlan& m) {
  if (pred.shape() != target.shape() || pred.rank() != 2) {
    throw DimensionError("masked_mse_loss: pred " + to_string(pred.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  if (pred.dim(0) != m.grid.count) {
    throw ContractError("masked_mse_loss: " + std::to_string(pred.dim(0)) +
                        " tokens but the mask covers " + std::to_string(m.grid.count));
  }
  if (m.masked.empty()) throw ContractError("masked_mse_loss: mask has no masked tokens");
  const Tensor<T> diff = ops::sub(ops::gather_rows(pred, m.masked), ops::gather_rows(target, m.masked));
  return ops::mean(ops::mul(diff, diff));
}

template <typename T>
Tensor<T> normalize_patches(const Tensor<T>& raw) {
  const std::size_t n = raw.dim(0);
  const std::size_t d = raw.dim(1);
  std::vector<T> out(raw.numel());
  const auto in = raw.data();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[i * d + j] - mu) * (in[i * d + j] - mu);
    const double inv = 1.0 / std::sqrt(var / static_cast<double>(d) + 1e-6);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = static_cast<T>((in[i * d + j] - mu) * inv);
  }
  return Tensor<T>::constant(raw.shape(), std::move(out));
}

template <typename T>
MaeModel<T>::MaeModel(const MaeConfig& config, const Extents& volume, std::uint64_t seed)
    : config_(config), store_(seed) {
  config_.validate();
  grid_ = PatchGrid::make(volume, config_.patch);
  config_.encoder.validate_grid(grid_.grid);
  encoder_ = Encoder<T>(store_, "encoder", config_.encoder, grid_.patch_dim);
  bridge_ = Linear<T>(store_, "mae.bridge", config_.encoder.dims.back(), config_.decoder_dim);
  mask_token_ = store_.create("mae.mask_token", {config_.decoder_dim}, Init::Normal002);
  for (std::size_t b = 0; b < config_.decoder_depth; ++b) {
    decoder_.emplace_back(store_, "mae.decoder.blocks." + std::to_string(b), config_.decoder_dim,
                          config_.decoder_heads, config_.encoder.mlp_ratio);
  }
  decoder_norm_ = LayerNorm<T>(store_, "mae.decoder.norm", config_.decoder_dim);
  head_ = Linear<T>(store_, "mae.head", config_.decoder_dim, grid_.patch_dim);
  encoder_pos_ = positional_encoding<T>(grid_, config_.encoder.dims[0]);
  decoder_pos_ = positional_encoding<T>(grid_, config_.decoder_dim);
}

template <typename T>
typename MaeModel<T>::Output MaeModel<T>::forward(const Volume& v, const MaskPlan& m) const {
  if (v.extents != grid_.volume) {
    throw ContractError("mae: volume " + to_string(v.extents) + " does not match model volume " +
                        to_string(grid_.volume));
  }
  if (!(m.grid == grid_)) throw ContractError("mae: mask grid does not match the model grid");

  const PatchSequence<T> raw = patchify<T>(v, config_.patch);
  PatchSequence<T> embedded{grid_, ops::add(encoder_.embed(raw.tokens), encoder_pos_), false};
  const VisibleTokens<T> visible = gather_visible(embedded, m);
  const StageFeatures<T> features = encoder_(visible.tokens, TokenSet{grid_.grid, m.visible});

  // Each visible stage-0 token receives the bottleneck token of its ancestor cell.
  const std::size_t shift = config_.encoder.stages() - 1;
  const TokenSet& coarse = features.sets.back();
  std::vector<std::size_t> row_of(coarse.grid_size(), 0);
  for (std::size_t i = 0; i < coarse.cells.size(); ++i) row_of[coarse.cells[i]] = i;
  std::vector<std::size_t> ancestors;
  ancestors.reserve(m.visible.size());
  for (std::size_t cell : m.visible) {
    const GridCoord c = grid_.coord(cell);
    const std::size_t a = ((c[0] >> shift) * coarse.grid[1] + (c[1] >> shift)) * coarse.grid[2] +
                          (c[2] >> shift);
    ancestors.push_back(row_of[a]);
  }
  const Tensor<T> projected = ops::gather_rows(bridge_(features.bottleneck()), ancestors);
  const PatchSequence<T> full = scatter_full(projected, mask_token_, m);

  Tensor<T> h = ops::add(full.tokens, decoder_pos_);
  const WindowPartition all = WindowPartition::global(grid_.count);
  for (const auto& block : decoder_) h = block(h, all);
  const Tensor<T> pred = head_(decoder_norm_(h));

  Tensor<T> target = config_.normalize_targets ? normalize_patches(raw.tokens) : raw.tokens;
  Tensor<T> loss = masked_mse_loss(pred, target, m);
  return Output{PatchSequence<T>{grid_, pred, true}, std::move(target), std::move(loss)};
}

template <typename T>
MaeBatch<T> mae_forward(const std::vector<Volume>& batch, const std::vector<MaskPlan>& masks,
                        const MaeModel<T>& model) {
  if (batch.empty() || batch.size() != masks.size()) {
    throw ContractError("mae_forward: need one mask per volume and a non-empty batch");
  }
  MaeBatch<T> out;
  Tensor<T> total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto item = model.forward(batch[i], masks[i]);
    out.reconstructions.push_back(std::move(item.reconstruction));
    total = total.defined() ? ops::add(total, item.loss) : item.loss;
  }
  out.loss = ops::scale(total, static_cast<T>(1.0 / static_cast<double>(batch.size())));
  return out;
}

MaskPlan pretrain_mask(const MaeConfig& config, const PatchGrid& grid, std::size_t epoch,
                       std::size_t item) {
  Rng rng(config.seed, "mae/mask/" + std::to_string(epoch) + "/" + std::to_string(item));
  return sample_mask(grid, config.mask_ratio, rng);
}

std::string encoder_fingerprint(const EncoderConfig& encoder, const Extents& patch) {
  return fingerprint_of(nlohmann::json{{"encoder", encoder}, {"patch", patch}});
}

PretrainResult pretrain(const Dataset& dataset, const MaeConfig& config,
                        const EpochCallback& on_epoch) {
  config.validate();
  const auto& items = dataset.indices(Split::PretrainUnlabeled);
  if (items.empty()) throw ConfigError("pretrain: the pretrain-unlabeled split is empty");

  MaeModel<float> model(config, dataset.config.extents, config.seed);
  std::vector<Volume> volumes;
  volumes.reserve(items.size());
  for (std::size_t i : items) volumes.push_back(normalize_volume(dataset.items.at(i).volume));

  const std::size_t n = volumes.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const std::size_t warmup = std::min(total_steps, steps_per_epoch * config.optimizer.warmup_epochs);
  const auto& params = model.parameters().all();
  AdamW<float> optimizer(params, config.optimizer, warmup, total_steps);
  GradientAccumulator<float> grads(params);

  PretrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(config.seed, "mae/order/" + std::to_string(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      grads.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t item = order[k];
        const MaskPlan mask = pretrain_mask(config, model.grid(), epoch, items[item]);
        const auto out = model.forward(volumes[item], mask);
        epoch_loss += static_cast<double>(out.loss.item());
        grads.add(backward(out.loss));
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      optimizer.step(grads);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, result.loss_curve.back());
  }

  Checkpoint& c = result.checkpoint;
  c.params = export_parameters(model.parameters(), "encoder.");
  c.config = config;
  c.fingerprint = fingerprint_of(c.config);
  c.encoder_fingerprint = encoder_fingerprint(config.encoder, config.patch);
  c.provenance = Provenance::MaePretrained;
  c.epoch = config.epochs;
  c.seed = config.seed;
  return result;
}

template Tensor<float> masked_mse_loss(const Tensor<float>&, const Tensor<float>&, const MaskPlan&);
template Tensor<double> masked_mse_loss(const Tensor<double>&, const Tensor<double>&,
                                        const MaskPlan&);
template Tensor<float> normalize_patches(const Tensor<float>&);
template Tensor<double> normalize_patches(const Tensor<double>&);
template class MaeModel<float>;
template class MaeModel<double>;
template MaeBatch<float> mae_forward(const std::vector<Volume>&, const std::vector<MaskPlan>&,
                                     const MaeModel<float>&);
template MaeBatch<double> mae_forward(const std::vector<Volume>&, const std::vector<MaskPlan>&,
                                      const MaeModel<double>&);

}  // namespace voxmae
