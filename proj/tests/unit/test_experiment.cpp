#include <gtest/gtest.h>

#include <filesystem>
#include <limits>
#include <set>

#include "voxmae/config.hpp"
#include "voxmae/diagnostics.hpp"
#include "voxmae/error.hpp"
#include "voxmae/experiment.hpp"
#include "voxmae/volume_io.hpp"

namespace {

using namespace voxmae;
namespace fs = std::filesystem;

ExperimentDescriptor tiny_descriptor() {
  ExperimentDescriptor d;
  d.phantom.extents = {16, 16, 16};
  d.splits = {4, 4, 2, 2};
  d.data_seed = 5;
  d.mae = tiny_mae_config();
  d.mae.epochs = 2;
  d.mae.batch_size = 2;
  d.mae.optimizer.warmup_epochs = 1;
  d.seg = tiny_seg_config();
  d.seg.epochs = 2;
  d.seg.optimizer.warmup_epochs = 1;
  d.label_fractions = {0.5, 1.0};
  d.seeds = {0, 1};
  return d;
}

ExperimentArm arm(InitStrategy init, double fraction, std::uint64_t seed, double dice,
                  std::vector<double> val) {
  ExperimentArm a;
  a.init = init;
  a.label_fraction = fraction;
  a.seed = seed;
  a.test.mean_foreground = dice;
  a.val_dice = std::move(val);
  return a;
}

TEST(Subsample, TakesCeilingAndIsDeterministicSubset) {
  std::vector<std::size_t> items{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  for (double f : {0.1, 0.25, 0.5, 1.0}) {
    const auto a = subsample_labeled(items, f, 3);
    EXPECT_EQ(a.size(), static_cast<std::size_t>(std::ceil(f * 10.0 - 1e-9)));
    EXPECT_EQ(a, subsample_labeled(items, f, 3));
    std::set<std::size_t> unique(a.begin(), a.end());
    EXPECT_EQ(unique.size(), a.size());
    for (auto i : a) EXPECT_TRUE(i >= 10 && i <= 19);
  }
  EXPECT_THROW(subsample_labeled(items, 0.0, 1), ConfigError);
  EXPECT_THROW(subsample_labeled({}, 0.5, 1), ConfigError);
}

TEST(Summarize, MediansTreatMissingThresholdAsInfinite) {
  std::vector<ExperimentArm> arms{
      arm(InitStrategy::Scratch, 1.0, 0, 0.7, {0.5, 0.65}),
      arm(InitStrategy::Scratch, 1.0, 1, 0.8, {0.1, 0.2}),
      arm(InitStrategy::Scratch, 1.0, 2, 0.9, {0.1, 0.2}),
      arm(InitStrategy::MaePretrained, 1.0, 0, 0.75, {0.7, 0.8}),
      arm(InitStrategy::MaePretrained, 1.0, 1, 0.85, {0.1, 0.7}),
      arm(InitStrategy::MaePretrained, 1.0, 2, 0.95, {0.1, 0.2}),
  };
  const auto cells = summarize(arms, 0.6);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].init, InitStrategy::Scratch);
  EXPECT_DOUBLE_EQ(cells[0].median_final_dice, 0.8);
  EXPECT_FALSE(cells[0].median_epochs_to_threshold);  // {2, inf, inf}
  EXPECT_EQ(cells[1].median_epochs_to_threshold, 2.0);  // {1, 2, inf}
  EXPECT_EQ(cells[1].seeds, 3u);
}

TEST(Directional, ChecksReadTheRightCells) {
  ExperimentReport r;
  r.arms = {arm(InitStrategy::Scratch, 0.1, 0, 0.5, {0.7}), arm(InitStrategy::Scratch, 1.0, 0, 0.8, {0.1, 0.7}),
            arm(InitStrategy::MaePretrained, 0.1, 0, 0.6, {0.1}),
            arm(InitStrategy::MaePretrained, 1.0, 0, 0.85, {0.7})};
  r.cells = summarize(r.arms, 0.6);
  const auto c = directional_checks(r);
  EXPECT_TRUE(c.accuracy_holds());
  EXPECT_TRUE(c.convergence_holds());
  EXPECT_TRUE(c.robustness_holds());
  EXPECT_NEAR(c.drop_scratch(), 0.3, 1e-12);
  EXPECT_THROW(directional_checks(r, 0.25), ContractError);

  DirectionalChecks d;
  d.epochs_scratch = 3.0;
  EXPECT_FALSE(d.convergence_holds());  // pretrained never reached threshold
  d.epochs_mae = 3.0;
  EXPECT_TRUE(d.convergence_holds());
}

TEST(Descriptor, JsonRoundTripAndValidation) {
  const ExperimentDescriptor d = tiny_descriptor();
  const auto back = nlohmann::json(d).get<ExperimentDescriptor>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(d));
  EXPECT_EQ(back.mae, d.mae);
  EXPECT_EQ(back.seg, d.seg);
  ExperimentDescriptor bad = d;
  bad.seg.encoder.heads = {3, 3};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = d;
  bad.label_fractions = {0.5, 0.5};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.label_fractions = {1.5};
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW((nlohmann::json{{"seedz", {1}}}.get<ExperimentDescriptor>()), ConfigError);
}

TEST(Reference, CarriesReportedNumbersAndFlag) {
  const auto ref = reference_block();
  EXPECT_EQ(ref.at("status"), "paper-reported, not reproduced");
  const std::string text = ref.dump();
  for (const char* n : {"86.3", "88.7", "83.6", "85.1", "84.3", "86.4"}) {
    EXPECT_NE(text.find(n), std::string::npos) << n;
  }
}

TEST(Experiment, TinyRunIsDeterministicAcrossThreadCounts) {
  const ExperimentDescriptor d = tiny_descriptor();
  const ExperimentReport a = run_experiment(d, 1);
  const ExperimentReport b = run_experiment(d, 3);
  EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  EXPECT_EQ(a.arms.size(), 8u);
  EXPECT_EQ(a.cells.size(), 4u);
  EXPECT_EQ(a.pretrain_loss.size(), 2u);

  const fs::path dir = fs::temp_directory_path() / "voxmae_unit_report";
  fs::remove_all(dir);
  emit_report(a, dir);
  for (const char* f : {"report.json", "summary.csv", "curves.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const ExperimentReport back = read_report(dir / "report.json");
  EXPECT_EQ(back, a);

  const std::string summary = summary_csv(a);
  EXPECT_EQ(summary.rfind("training_strategy,encoder_initialization,label_fraction,seeds,", 0), 0u);
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 5);
  const std::string curves = curves_csv(a);
  EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 8 * 2);
}

TEST(Experiment, InvalidDescriptorFailsBeforeTraining) {
  ExperimentDescriptor d = tiny_descriptor();
  d.threshold = 1.5;
  EXPECT_THROW(run_experiment(d), ConfigError);
}

}  // namespace
