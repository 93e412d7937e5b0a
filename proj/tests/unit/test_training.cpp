#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "voxmae/checkpoint.hpp"
#include "voxmae/diagnostics.hpp"
#include "voxmae/error.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/optimizer.hpp"
#include "voxmae/ops.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/segmentation.hpp"

namespace {

using namespace voxmae;
using voxmae::testing::random_labels;
using voxmae::testing::random_param;
using voxmae::testing::random_tensor;

Dataset small_dataset() {
  PhantomConfig p;
  p.extents = {16, 16, 16};
  return generate_dataset(p, SplitCounts{4, 3, 2, 2}, 21);
}

MaeConfig small_mae() {
  MaeConfig c = tiny_mae_config();
  c.epochs = 3;
  c.batch_size = 2;
  c.optimizer.warmup_epochs = 1;
  return c;
}

SegConfig small_seg() {
  SegConfig c = tiny_seg_config();
  c.epochs = 3;
  c.batch_size = 2;
  c.optimizer.warmup_epochs = 1;
  return c;
}

TEST(ModelGradients, TinyMaeMatchesFiniteDifferences) {
  const auto r = mae_gradient_check(1);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(ModelGradients, TinySegMatchesFiniteDifferences) {
  const auto r = seg_gradient_check(1);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(DiceCeLoss, MatchesDirectFormula) {
  Rng rng(2, "loss");
  const Extents e{2, 3, 2};
  const std::size_t c = 3, v = 12;
  const auto logits = random_tensor<double>({c, 2, 3, 2}, rng);
  const auto labels = random_labels(e, c, rng);
  const double eps = 1e-5;
  std::vector<double> prob(c * v);
  double ce = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    double mx = -1e300, z = 0.0;
    for (std::size_t k = 0; k < c; ++k) mx = std::max(mx, logits.data()[k * v + i]);
    for (std::size_t k = 0; k < c; ++k) z += std::exp(logits.data()[k * v + i] - mx);
    for (std::size_t k = 0; k < c; ++k) prob[k * v + i] = std::exp(logits.data()[k * v + i] - mx) / z;
    ce -= std::log(prob[labels.classes[i] * v + i]);
  }
  ce /= static_cast<double>(v);
  double dice = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    double inter = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      const double g = labels.classes[i] == k ? 1.0 : 0.0;
      inter += prob[k * v + i] * g;
      sp += prob[k * v + i];
      sg += g;
    }
    dice += 1.0 - (2.0 * inter + eps) / (sp + sg + eps);
  }
  dice /= static_cast<double>(c);
  EXPECT_NEAR(dice_ce_loss(logits, labels, 0.7, 1.3, eps).item(), 0.7 * dice + 1.3 * ce, 1e-12);
}

TEST(DiceCeLoss, ConfidentCorrectLogitsGiveSmallLoss) {
  Rng rng(3, "loss");
  const auto labels = random_labels({2, 2, 2}, 3, rng);
  std::vector<double> l(3 * 8, -20.0);
  for (std::size_t i = 0; i < 8; ++i) l[labels.classes[i] * 8 + i] = 20.0;
  const auto logits = Tensor<double>::constant({3, 2, 2, 2}, l);
  EXPECT_LT(dice_ce_loss(logits, labels).item(), 1e-6);
  EXPECT_EQ(argmax_labels(logits).classes, labels.classes);
}

TEST(Optimizer, WarmupThenCosine) {
  OptimizerConfig c;
  c.lr = 1.0;
  c.min_lr = 0.1;
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 0, 4, 14), 0.25);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 3, 4, 14), 1.0);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 4, 4, 14), 1.0);
  EXPECT_NEAR(scheduled_lr(c, 13, 4, 14), 0.1, 1e-12);
  EXPECT_NEAR(scheduled_lr(c, 100, 4, 14), 0.1, 1e-12);
  for (std::size_t s = 4; s < 13; ++s) EXPECT_GE(scheduled_lr(c, s, 4, 14), scheduled_lr(c, s + 1, 4, 14));
}

TEST(Optimizer, ConfigValidation) {
  OptimizerConfig c;
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.min_lr = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Optimizer, FirstStepMatchesHandComputation) {
  Rng rng(4, "adam");
  auto w = random_param<double>({2, 2}, rng);
  auto b = random_param<double>({2}, rng);
  const std::vector<double> w0(w.data().begin(), w.data().end());
  const std::vector<double> b0(b.data().begin(), b.data().end());
  OptimizerConfig c;
  c.lr = 0.1;
  c.clip_norm = 1e9;
  AdamW<double> opt({w, b}, c, 0, 10);
  GradientAccumulator<double> acc({w, b});
  const auto loss = ops::add(ops::sum(ops::mul(w, w)), ops::sum(b));
  acc.add(backward(loss));
  opt.step(acc);
  // After one bias-corrected step each coordinate moves by lr * sign(g),
  // plus decoupled decay on the matrix only.
  for (std::size_t i = 0; i < 4; ++i) {
    const double g = 2.0 * w0[i];
    const double expected = w0[i] - 0.1 * (g / (std::abs(g) + 1e-8) + 0.05 * w0[i]);
    EXPECT_NEAR(w.data()[i], expected, 1e-9);
  }
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.data()[i], b0[i] - 0.1 * (1.0 / (1.0 + 1e-8)), 1e-9);
}

TEST(Optimizer, ClipsGlobalNormAndRespectsFrozen) {
  Rng rng(5, "adam");
  auto w = random_param<double>({3, 3}, rng);
  auto f = random_param<double>({3, 3}, rng);
  const std::vector<double> f0(f.data().begin(), f.data().end());
  OptimizerConfig c;
  AdamW<double> opt({w, f}, c, 0, 10, {false, true});
  GradientAccumulator<double> acc({w, f});
  acc.add(backward(ops::scale(ops::sum(ops::add(w, f)), 100.0)));
  EXPECT_NEAR(acc.global_norm(), 100.0 * std::sqrt(18.0), 1e-9);
  opt.step(acc);
  EXPECT_NEAR(acc.global_norm(), c.clip_norm, 1e-9);
  EXPECT_TRUE(std::equal(f0.begin(), f0.end(), f.data().begin()));
}

TEST(Mae, BatchLossIsItemMean) {
  const MaeConfig c = small_mae();
  const Dataset ds = small_dataset();
  MaeModel<double> model(c, ds.config.extents, 1);
  std::vector<Volume> vols;
  std::vector<MaskPlan> masks;
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    vols.push_back(normalize_volume(ds.items[k].volume));
    masks.push_back(pretrain_mask(c, model.grid(), 1, k));
    sum += model.forward(vols.back(), masks.back()).loss.item();
  }
  const auto batch = mae_forward(vols, masks, model);
  EXPECT_NEAR(batch.loss.item(), sum / 3.0, 1e-12);
  EXPECT_EQ(batch.reconstructions.size(), 3u);
  EXPECT_THROW(mae_forward(vols, {masks[0]}, model), ContractError);
}

TEST(Mae, ReconstructionHasRawPatchShape) {
  const MaeConfig c = small_mae();
  MaeModel<float> model(c, {16, 16, 16}, 2);
  Rng rng(3, "mae");
  const Volume v = voxmae::testing::random_volume({16, 16, 16}, rng);
  const auto out = model.forward(v, pretrain_mask(c, model.grid(), 1, 0));
  EXPECT_EQ(out.reconstruction.tokens.shape(), (Shape{64, 64}));
  EXPECT_TRUE(out.reconstruction.raw);
  EXPECT_NO_THROW(unpatchify(out.reconstruction));
  EXPECT_THROW(model.forward(voxmae::testing::random_volume({8, 8, 8}, rng), pretrain_mask(c, model.grid(), 1, 0)),
               ContractError);
}

TEST(Mae, ConfigValidation) {
  MaeConfig c;
  c.decoder_dim = 50;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MaeConfig{};
  c.mask_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pretrain, DeterministicAndExportsOnlyEncoder) {
  const Dataset ds = small_dataset();
  const auto a = pretrain(ds, small_mae());
  const auto b = pretrain(ds, small_mae());
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  EXPECT_EQ(a.loss_curve.size(), 3u);
  EXPECT_EQ(a.checkpoint.provenance, Provenance::MaePretrained);
  for (const auto& p : a.checkpoint.params) EXPECT_EQ(p.name.rfind("encoder.", 0), 0u) << p.name;
  MaeConfig other = small_mae();
  other.seed = 1;
  EXPECT_NE(pretrain(ds, other).loss_curve, a.loss_curve);
}

TEST(Finetune, DeterministicWithCurvesPerEpoch) {
  const Dataset ds = small_dataset();
  const auto a = finetune(ds, small_seg(), nullptr);
  const auto b = finetune(ds, small_seg(), nullptr);
  EXPECT_EQ(a.train_loss, b.train_loss);
  EXPECT_EQ(a.val_dice, b.val_dice);
  EXPECT_EQ(a.train_loss.size(), 3u);
  EXPECT_EQ(a.checkpoint.provenance, Provenance::Finetuned);
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
}

TEST(Finetune, FrozenEncoderKeepsTransferredWeights) {
  const Dataset ds = small_dataset();
  const auto pre = pretrain(ds, small_mae());
  SegConfig sc = small_seg();
  sc.freeze_encoder = true;
  const auto r = finetune(ds, sc, &pre.checkpoint);
  EXPECT_EQ(r.transfer.transferred.size(), pre.checkpoint.params.size());
  for (const auto& p : pre.checkpoint.params) {
    const NamedArray* after = r.checkpoint.find(p.name);
    ASSERT_NE(after, nullptr) << p.name;
    EXPECT_EQ(after->values, p.values) << p.name;
  }
}

TEST(Finetune, InitFromCheckpointPath) {
  const Dataset ds = small_dataset();
  const auto pre = pretrain(ds, small_mae());
  const auto path = std::filesystem::temp_directory_path() / "voxmae_unit_init.ckpt";
  save_checkpoint(path, pre.checkpoint);
  SegConfig sc = small_seg();
  sc.init = "checkpoint:" + path.string();
  const auto by_path = finetune(ds, sc);
  const auto direct = finetune(ds, small_seg(), &pre.checkpoint);
  EXPECT_EQ(by_path.val_dice, direct.val_dice);
  sc.init = "pretrained";
  EXPECT_THROW(sc.validate(), ConfigError);
}

TEST(Finetune, RejectsUnlabeledTrainingItems) {
  const Dataset ds = small_dataset();
  EXPECT_THROW(finetune(ds, small_seg(), nullptr, ds.indices(Split::PretrainUnlabeled)), DataError);
}

TEST(SegModel, PredictCoversVolume) {
  SegModel<float> model(small_seg(), {16, 16, 16}, 4);
  Rng rng(5, "seg");
  const auto labels = model.predict(voxmae::testing::random_volume({16, 16, 16}, rng));
  EXPECT_EQ(labels.extents, (Extents{16, 16, 16}));
  EXPECT_EQ(labels.num_classes, 3u);
  for (auto c : labels.classes) EXPECT_LT(c, 3);
}

}  // namespace
