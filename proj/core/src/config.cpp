#include "voxmae/config.hpp"

#include <algorithm>

#include "voxmae/error.hpp"
#include "voxmae/volume_io.hpp"

namespace voxmae {

using nlohmann::json;

namespace {

template <typename V>
void read_opt(const json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void require_object(const json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
}

}  // namespace

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& context) {
  require_object(j, context);
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(context + ": unknown key '" + item.key() + "'");
  }
}

void to_json(json& j, const AttentionKind& k) { j = to_string(k); }

void from_json(const json& j, AttentionKind& k) {
  const auto s = j.get<std::string>();
  if (s == "local") {
    k = AttentionKind::Local;
  } else if (s == "global") {
    k = AttentionKind::Global;
  } else {
    throw ConfigError("attention kind must be 'local' or 'global', got '" + s + "'");
  }
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"dims", c.dims},   {"depths", c.depths}, {"heads", c.heads},
           {"kinds", c.kinds}, {"window", c.window}, {"mlp_ratio", c.mlp_ratio}};
}

void from_json(const json& j, EncoderConfig& c) {
  require_known_keys(j, {"dims", "depths", "heads", "kinds", "window", "mlp_ratio"}, "encoder");
  read_opt(j, "dims", c.dims);
  read_opt(j, "depths", c.depths);
  read_opt(j, "heads", c.heads);
  read_opt(j, "kinds", c.kinds);
  read_opt(j, "window", c.window);
  read_opt(j, "mlp_ratio", c.mlp_ratio);
}

void to_json(json& j, const OptimizerConfig& c) {
  j = json{{"lr", c.lr},
           {"min_lr", c.min_lr},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"eps", c.eps},
           {"warmup_epochs", c.warmup_epochs},
           {"clip_norm", c.clip_norm}};
}

void from_json(const json& j, OptimizerConfig& c) {
  require_known_keys(
      j, {"lr", "min_lr", "weight_decay", "beta1", "beta2", "eps", "warmup_epochs", "clip_norm"},
      "optimizer");
  read_opt(j, "lr", c.lr);
  read_opt(j, "min_lr", c.min_lr);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "eps", c.eps);
  read_opt(j, "warmup_epochs", c.warmup_epochs);
  read_opt(j, "clip_norm", c.clip_norm);
}

void to_json(json& j, const PhantomConfig& c) {
  j = json{{"extents", c.extents},
           {"spacing", c.spacing},
           {"num_classes", c.num_classes},
           {"organ_radius", c.organ_radius},
           {"lesion_radius", c.lesion_radius},
           {"class_means", c.class_means},
           {"noise_sigma", c.noise_sigma}};
}

void from_json(const json& j, PhantomConfig& c) {
  require_known_keys(j,
                     {"extents", "spacing", "num_classes", "organ_radius", "lesion_radius",
                      "class_means", "noise_sigma"},
                     "phantom");
  read_opt(j, "extents", c.extents);
  read_opt(j, "spacing", c.spacing);
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "organ_radius", c.organ_radius);
  read_opt(j, "lesion_radius", c.lesion_radius);
  read_opt(j, "class_means", c.class_means);
  read_opt(j, "noise_sigma", c.noise_sigma);
}

void to_json(json& j, const SplitCounts& c) {
  j = json{{"pretrain", c.pretrain}, {"train", c.train}, {"validation", c.validation},
           {"test", c.test}};
}

void from_json(const json& j, SplitCounts& c) {
  require_known_keys(j, {"pretrain", "train", "validation", "test"}, "splits");
  read_opt(j, "pretrain", c.pretrain);
  read_opt(j, "train", c.train);
  read_opt(j, "validation", c.validation);
  read_opt(j, "test", c.test);
}

void to_json(json& j, const MaeConfig& c) {
  j = json{{"patch", c.patch},
           {"encoder", c.encoder},
           {"mask_ratio", c.mask_ratio},
           {"decoder_dim", c.decoder_dim},
           {"decoder_depth", c.decoder_depth},
           {"decoder_heads", c.decoder_heads},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"optimizer", c.optimizer},
           {"normalize_targets", c.normalize_targets},
           {"seed", c.seed}};
}

void from_json(const json& j, MaeConfig& c) {
  require_known_keys(j,
                     {"patch", "encoder", "mask_ratio", "decoder_dim", "decoder_depth",
                      "decoder_heads", "epochs", "batch_size", "optimizer", "normalize_targets",
                      "seed"},
                     "mae");
  read_opt(j, "patch", c.patch);
  read_opt(j, "encoder", c.encoder);
  read_opt(j, "mask_ratio", c.mask_ratio);
  read_opt(j, "decoder_dim", c.decoder_dim);
  read_opt(j, "decoder_depth", c.decoder_depth);
  read_opt(j, "decoder_heads", c.decoder_heads);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "optimizer", c.optimizer);
  read_opt(j, "normalize_targets", c.normalize_targets);
  read_opt(j, "seed", c.seed);
}

void to_json(json& j, const SegConfig& c) {
  j = json{{"patch", c.patch},
           {"encoder", c.encoder},
           {"num_classes", c.num_classes},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"optimizer", c.optimizer},
           {"dice_weight", c.dice_weight},
           {"ce_weight", c.ce_weight},
           {"dice_eps", c.dice_eps},
           {"freeze_encoder", c.freeze_encoder},
           {"init", c.init},
           {"seed", c.seed}};
}

void from_json(const json& j, SegConfig& c) {
  require_known_keys(j,
                     {"patch", "encoder", "num_classes", "epochs", "batch_size", "optimizer",
                      "dice_weight", "ce_weight", "dice_eps", "freeze_encoder", "init", "seed"},
                     "seg");
  read_opt(j, "patch", c.patch);
  read_opt(j, "encoder", c.encoder);
  read_opt(j, "num_classes", c.num_classes);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "optimizer", c.optimizer);
  read_opt(j, "dice_weight", c.dice_weight);
  read_opt(j, "ce_weight", c.ce_weight);
  read_opt(j, "dice_eps", c.dice_eps);
  read_opt(j, "freeze_encoder", c.freeze_encoder);
  read_opt(j, "init", c.init);
  read_opt(j, "seed", c.seed);
}

json load_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path.string() + "': " + e.what());
  }
}

}  // namespace voxmae
