#include "voxmae/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "voxmae/config.hpp"
#include "voxmae/error.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/ops.hpp"

namespace voxmae {

void SegConfig::validate() const {
  encoder.validate();
  if (num_classes < 2 || num_classes > 256) {
    throw ConfigError("seg: num_classes must lie in [2, 256], got " + std::to_string(num_classes));
  }
  if (encoder.dims[0] % 6 != 0) {
    throw ConfigError("seg: encoder stage-0 dim must be a multiple of 6, got " +
                      std::to_string(encoder.dims[0]));
  }
  if (epochs == 0 || batch_size == 0) throw ConfigError("seg: epochs and batch_size must be positive");
  if (!(dice_weight >= 0.0) || !(ce_weight >= 0.0) || dice_weight + ce_weight <= 0.0) {
    throw ConfigError("seg: loss weights must be non-negative and not both zero");
  }
  if (!(dice_eps > 0.0)) throw ConfigError("seg: dice_eps must be positive");
  if (init != "scratch" && init.rfind("checkpoint:", 0) != 0) {
    throw ConfigError("seg: init must be 'scratch' or 'checkpoint:<path>', got '" + init + "'");
  }
  optimizer.validate();
}

template <typename T>
std::vector<T> class_probabilities(const Tensor<T>& logits) {
  const std::size_t classes = logits.dim(0);
  const std::size_t voxels = logits.numel() / classes;
  const auto x = logits.data();
  std::vector<T> p(x.size());
  for (std::size_t v = 0; v < voxels; ++v) {
    T peak = x[v];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, x[c * voxels + v]);
    T total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c * voxels + v] = std::exp(x[c * voxels + v] - peak);
      total += p[c * voxels + v];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c * voxels + v] /= total;
  }
  return p;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw DimensionError("argmax_labels: expected C x D x H x W logits");
  const std::size_t classes = logits.dim(0);
  const Extents e{logits.dim(1), logits.dim(2), logits.dim(3)};
  const std::size_t voxels = voxel_count(e);
  const auto x = logits.data();
  LabelMap out;
  out.extents = e;
  out.num_classes = classes;
  out.classes.resize(voxels);
  for (std::size_t v = 0; v < voxels; ++v) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (x[c * voxels + v] > x[best * voxels + v]) best = c;
    }
    out.classes[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
Tensor<T> dice_ce_loss(const Tensor<T>& logits, const LabelMap& labels, double dice_weight,
                       double ce_weight, double eps) {
  if (logits.rank() != 4) {
    throw DimensionError("dice_ce_loss: expected C x D x H x W logits, got " +
                         to_string(logits.shape()));
  }
  const std::size_t classes = logits.dim(0);
  const Extents e{logits.dim(1), logits.dim(2), logits.dim(3)};
  if (e != labels.extents) {
    throw DimensionError("dice_ce_loss: logits cover " + to_string(e) + " but labels cover " +
                         to_string(labels.extents));
  }
  const std::size_t voxels = voxel_count(e);
  for (std::size_t v = 0; v < voxels; ++v) {
    if (labels.classes[v] >= classes) {
      throw DataError("dice_ce_loss: label " + std::to_string(labels.classes[v]) + " at voxel " +
                      std::to_string(v) + " is not below " + std::to_string(classes));
    }
  }
  if (!(eps > 0.0)) throw ParameterError("dice_ce_loss: eps must be positive");

  const auto x = logits.data();
  std::vector<double> p(x.size());
  // Extended-precision sums keep the loss accurate to a few ulps over large volumes.
  long double ce = 0.0L;
  for (std::size_t v = 0; v < voxels; ++v) {
    double peak = x[v];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, double(x[c * voxels + v]));
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      p[c * voxels + v] = std::exp(double(x[c * voxels + v]) - peak);
      total += p[c * voxels + v];
    }
    for (std::size_t c = 0; c < classes; ++c) p[c * voxels + v] /= total;
    const std::size_t y = labels.classes[v];
    ce -= static_cast<long double>(double(x[y * voxels + v]) - peak - std::log(total));
  }
  ce /= static_cast<long double>(voxels);

  std::vector<double> inter(classes, 0.0), psum(classes, 0.0), gsum(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    long double in_sum = 0.0L, p_sum = 0.0L;
    for (std::size_t v = 0; v < voxels; ++v) {
      p_sum += p[c * voxels + v];
      if (labels.classes[v] == c) {
        in_sum += p[c * voxels + v];
        gsum[c] += 1.0;
      }
    }
    inter[c] = static_cast<double>(in_sum);
    psum[c] = static_cast<double>(p_sum);
  }
  double dice_mean = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    dice_mean += (2.0 * inter[c] + eps) / (psum[c] + gsum[c] + eps);
  }
  dice_mean /= static_cast<double>(classes);
  const double loss = ce_weight * static_cast<double>(ce) + dice_weight * (1.0 - dice_mean);

  auto backward = [p = std::move(p), inter, psum, gsum, classes, voxels, dice_weight, ce_weight,
                   eps, labels_ptr = labels.classes](Node<T>& out) {
    Node<T>& in = *out.parents[0];
    if (!in.requires_grad) return;
    const double upstream = out.grad[0];
    auto& g = in.grad_buffer();
    std::vector<double> q(classes);
    for (std::size_t v = 0; v < voxels; ++v) {
      const std::size_t y = labels_ptr[v];
      double dot = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        const double denom = psum[c] + gsum[c] + eps;
        const double gc = (y == c) ? 1.0 : 0.0;
        const double ddice = (2.0 * gc * denom - (2.0 * inter[c] + eps)) / (denom * denom);
        q[c] = -dice_weight / static_cast<double>(classes) * ddice;
        dot += p[c * voxels + v] * q[c];
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double pc = p[c * voxels + v];
        const double ce_grad = ce_weight * (pc - (y == c ? 1.0 : 0.0)) / static_cast<double>(voxels);
        g[c * voxels + v] += static_cast<T>(upstream * (ce_grad + pc * (q[c] - dot)));
      }
    }
  };
  return make_op<T>("dice_ce_loss", Shape{}, {static_cast<T>(loss)}, {logits}, std::move(backward));
}

template <typename T>
SegModel<T>::SegModel(const SegConfig& config, const Extents& volume, std::uint64_t seed)
    : config_(config), store_(seed) {
  config_.validate();
  grid_ = PatchGrid::make(volume, config_.patch);
  config_.encoder.validate_grid(grid_.grid);
  grids_ = config_.encoder.stage_grids(grid_.grid);
  const EncoderConfig& ec = config_.encoder;
  encoder_ = Encoder<T>(store_, "encoder", ec, grid_.patch_dim);
  pos_ = positional_encoding<T>(grid_, ec.dims[0]);
  for (std::size_t s = 0; s + 1 < ec.stages(); ++s) {
    const std::string name = "seg.decoder." + std::to_string(s);
    levels_.push_back(Level{PatchExpand<T>(store_, name + ".expand", ec.dims[s + 1]),
                            Linear<T>(store_, name + ".fuse", 2 * ec.dims[s], ec.dims[s]),
                            TransformerBlock<T>(store_, name + ".block", ec.dims[s], ec.heads[s],
                                                ec.mlp_ratio)});
  }
  norm_ = LayerNorm<T>(store_, "seg.norm", ec.dims[0]);
  head_ = Linear<T>(store_, "seg.head", ec.dims[0], config_.num_classes * grid_.patch_dim);
}

template <typename T>
StageFeatures<T> SegModel<T>::encode(const Volume& normalized) const {
  if (normalized.extents != grid_.volume) {
    throw ContractError("seg: volume " + to_string(normalized.extents) +
                        " does not match model volume " + to_string(grid_.volume));
  }
  const PatchSequence<T> raw = patchify<T>(normalized, config_.patch);
  const Tensor<T> tokens = ops::add(encoder_.embed(raw.tokens), pos_);
  return encoder_(tokens, TokenSet::full(grid_.grid));
}

template <typename T>
Tensor<T> SegModel<T>::decode(const StageFeatures<T>& features, bool zero_skips) const {
  const EncoderConfig& ec = config_.encoder;
  if (features.tokens.size() != ec.stages() || features.sets.size() != ec.stages()) {
    throw ConfigError("seg: features carry " + std::to_string(features.tokens.size()) +
                      " stages, the decoder expects " + std::to_string(ec.stages()));
  }
  Tensor<T> h = features.bottleneck();
  for (std::size_t s = ec.stages() - 1; s-- > 0;) {
    const Level& level = levels_[s];
    const Tensor<T> up = level.expand(h, grids_[s + 1]);
    const Tensor<T>& skip_in = features.tokens[s];
    const Tensor<T> skip = zero_skips ? Tensor<T>::zeros(skip_in.shape()) : skip_in;
    const Tensor<T> fused = level.fuse(ops::concat<T>({up, skip}, 1));
    h = run_stage<T>({level.block}, fused, TokenSet::full(grids_[s]), ec.kinds[s], ec.window);
  }
  return unpatchify_channels(head_(norm_(h)), grid_, config_.num_classes);
}

template <typename T>
LabelMap SegModel<T>::predict(const Volume& volume) const {
  NoGradGuard guard;
  return argmax_labels(forward(normalize_volume(volume)));
}

template <typename T>
TransferReport transfer_encoder(const Checkpoint& c, SegModel<T>& model) {
  TransferReport report;
  if (c.provenance != Provenance::MaePretrained) {
    report.warnings.push_back(std::string("checkpoint provenance is '") + to_string(c.provenance) +
                              "', expected 'mae-pretrained'; transferring anyway");
  }
  const std::string expected = encoder_fingerprint(model.config().encoder, model.config().patch);
  std::vector<NamedArray> encoder_params;
  for (const auto& p : c.params) {
    if (p.name.rfind("encoder.", 0) == 0) encoder_params.push_back(p);
  }
  if (c.encoder_fingerprint != expected) {
    for (const auto& p : model.parameters().all()) {
      if (p.name().rfind("encoder.", 0) != 0) continue;
      const NamedArray* src = c.find(p.name());
      if (!src) {
        throw TransferError("encoder fingerprint mismatch: parameter '" + p.name() +
                            "' is missing from the checkpoint");
      }
      if (src->shape != p.shape()) {
        throw TransferError("encoder fingerprint mismatch: parameter '" + p.name() +
                            "' has shape " + to_string(src->shape) + " in the checkpoint but " +
                            to_string(p.shape()) + " in the model");
      }
    }
    for (const auto& a : encoder_params) {
      if (!model.parameters().find(a.name)) {
        throw TransferError("encoder fingerprint mismatch: checkpoint parameter '" + a.name +
                            "' does not exist in the model");
      }
    }
    throw TransferError("encoder fingerprint mismatch (checkpoint " + c.encoder_fingerprint +
                        ", model " + expected +
                        "): shapes agree but heads, attention kinds or windows differ");
  }
  for (const auto& p : model.parameters().all()) {
    if (p.name().rfind("encoder.", 0) == 0 && !c.find(p.name())) {
      throw TransferError("checkpoint lacks encoder parameter '" + p.name() + "'");
    }
  }
  report.transferred = import_parameters(model.parameters(), encoder_params, false);
  return report;
}

FinetuneResult finetune(const Dataset& dataset, const SegConfig& config, const Checkpoint* init,
                        const std::vector<std::size_t>& train_items,
                        const FinetuneCallback& on_epoch) {
  config.validate();
  const std::vector<std::size_t>& train =
      train_items.empty() ? dataset.indices(Split::TrainLabeled) : train_items;
  const auto& validation = dataset.indices(Split::Validation);
  if (train.empty()) throw ConfigError("finetune: the train-labeled split is empty");
  if (validation.empty()) throw ConfigError("finetune: the validation split is empty");
  if (dataset.config.num_classes != config.num_classes) {
    throw ConfigError("finetune: dataset has " + std::to_string(dataset.config.num_classes) +
                      " classes, config expects " + std::to_string(config.num_classes));
  }

  SegModel<float> model(config, dataset.config.extents, config.seed);
  FinetuneResult result;
  if (init) {
    result.transfer = transfer_encoder(*init, model);
    for (const auto& w : result.transfer.warnings) std::cerr << "warning: " << w << "\n";
  }

  std::vector<Volume> volumes;
  std::vector<const LabelMap*> labels;
  for (std::size_t i : train) {
    const DatasetItem& item = dataset.items.at(i);
    if (!item.labels) throw DataError("finetune: item " + std::to_string(i) + " has no labels");
    volumes.push_back(normalize_volume(item.volume));
    labels.push_back(&*item.labels);
  }

  const std::size_t n = volumes.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const std::size_t warmup = std::min(total_steps, steps_per_epoch * config.optimizer.warmup_epochs);
  const auto& params = model.parameters().all();
  std::vector<bool> frozen(params.size(), false);
  if (config.freeze_encoder) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      frozen[i] = params[i].name().rfind("encoder.", 0) == 0;
    }
  }
  AdamW<float> optimizer(params, config.optimizer, warmup, total_steps, frozen);
  GradientAccumulator<float> grads(params);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(config.seed, "seg/order/" + std::to_string(epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t end = std::min(n, start + config.batch_size);
      grads.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t item = order[k];
        const Tensor<float> loss = dice_ce_loss(model.forward(volumes[item]), *labels[item],
                                                config.dice_weight, config.ce_weight,
                                                config.dice_eps);
        epoch_loss += static_cast<double>(loss.item());
        grads.add(backward(loss));
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      optimizer.step(grads);
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(n));
    result.val_dice.push_back(evaluate(model, dataset, validation).mean_foreground);
    if (on_epoch) on_epoch(epoch, result.train_loss.back(), result.val_dice.back());
  }

  Checkpoint& c = result.checkpoint;
  c.params = export_parameters(model.parameters());
  c.config = config;
  c.fingerprint = fingerprint_of(c.config);
  c.encoder_fingerprint = encoder_fingerprint(config.encoder, config.patch);
  c.provenance = Provenance::Finetuned;
  c.epoch = config.epochs;
  c.seed = config.seed;
  return result;
}

FinetuneResult finetune(const Dataset& dataset, const SegConfig& config,
                        const FinetuneCallback& on_epoch) {
  config.validate();
  if (config.init == "scratch") return finetune(dataset, config, nullptr, {}, on_epoch);
  const Checkpoint init = load_checkpoint(config.init.substr(std::string("checkpoint:").size()));
  return finetune(dataset, config, &init, {}, on_epoch);
}

#define VOXMAE_INSTANTIATE_SEG(T)                                                            \
  template Tensor<T> dice_ce_loss<T>(const Tensor<T>&, const LabelMap&, double, double,      \
                                     double);                                                \
  template std::vector<T> class_probabilities<T>(const Tensor<T>&);                          \
  template LabelMap argmax_labels<T>(const Tensor<T>&);                                      \
  template class SegModel<T>;                                                                \
  template TransferReport transfer_encoder<T>(const Checkpoint&, SegModel<T>&);

VOXMAE_INSTANTIATE_SEG(float)
VOXMAE_INSTANTIATE_SEG(double)

}  // namespace voxmae
