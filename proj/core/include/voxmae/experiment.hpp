#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/metrics.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/segmentation.hpp"

namespace voxmae {

enum class InitStrategy { Scratch, MaePretrained };

const char* to_string(InitStrategy s);
InitStrategy init_strategy_from_string(const std::string& s);

/// Everything that determines an experiment's results. The seeds drive
/// pretraining, subsampling and fine-tuning; the dataset depends only on
/// data_seed.
struct ExperimentDescriptor {
  PhantomConfig phantom;
  SplitCounts splits;
  std::uint64_t data_seed = 0;
  MaeConfig mae;
  SegConfig seg;
  std::vector<double> label_fractions{0.1, 0.25, 1.0};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double threshold = 0.6;

  /// ConfigError on an unusable descriptor, including a fraction that selects no items.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentDescriptor& d);
void from_json(const nlohmann::json& j, ExperimentDescriptor& d);

struct ExperimentArm {
  InitStrategy init = InitStrategy::Scratch;
  double label_fraction = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_items;
  std::vector<double> train_loss;
  std::vector<double> val_dice;
  MetricReport test;
  std::optional<std::size_t> epochs_to_threshold;

  bool operator==(const ExperimentArm&) const = default;
};

/// Median over the seeds of one (init, fraction) cell. A missing
/// epochs-to-threshold counts as never (+inf); the median is absent when it
/// lands on such a value.
struct CellSummary {
  InitStrategy init = InitStrategy::Scratch;
  double label_fraction = 1.0;
  std::size_t seeds = 0;
  double median_final_dice = 0.0;
  std::optional<double> median_epochs_to_threshold;

  bool operator==(const CellSummary&) const = default;
};

struct ExperimentReport {
  std::string fingerprint;
  nlohmann::json descriptor;
  std::vector<std::uint64_t> pretrain_seeds;
  std::vector<std::vector<double>> pretrain_loss;
  std::vector<ExperimentArm> arms;
  std::vector<CellSummary> cells;
  nlohmann::json reference;

  bool operator==(const ExperimentReport&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

/// Published reference numbers, verbatim and unreconciled.
nlohmann::json reference_block();

/// Seeded shuffle of `items` (stream "subsample/<fraction>"), then the first
/// ceil(fraction * n). ConfigError when that is zero or fraction is outside (0, 1].
std::vector<std::size_t> subsample_labeled(const std::vector<std::size_t>& items, double fraction,
                                           std::uint64_t seed);

/// Groups arms into one summary per (init, fraction), ordered by init then by
/// first appearance of the fraction.
std::vector<CellSummary> summarize(const std::vector<ExperimentArm>& arms, double threshold);

using ProgressFn = std::function<void(const std::string& message)>;

/// Pretrains once per seed, then fine-tunes and tests every (init, fraction,
/// seed) arm. `threads` bounds concurrent runs and never changes results.
ExperimentReport run_experiment(const ExperimentDescriptor& d, std::size_t threads = 1,
                                const ProgressFn& progress = {});

/// The three qualitative comparisons between a low and a high label fraction.
struct DirectionalChecks {
  double low_fraction = 0.1;
  double high_fraction = 1.0;
  double low_dice_mae = 0.0;
  double low_dice_scratch = 0.0;
  double high_dice_mae = 0.0;
  double high_dice_scratch = 0.0;
  std::optional<double> epochs_mae;
  std::optional<double> epochs_scratch;

  double drop_mae() const { return high_dice_mae - low_dice_mae; }
  double drop_scratch() const { return high_dice_scratch - low_dice_scratch; }
  bool accuracy_holds() const { return low_dice_mae >= low_dice_scratch; }
  /// Absent epochs count as +inf; both absent is a tie.
  bool convergence_holds() const;
  bool robustness_holds() const { return drop_mae() <= drop_scratch(); }
};

/// ContractError when a needed cell is missing.
DirectionalChecks directional_checks(const ExperimentReport& r, double low_fraction = 0.1,
                                     double high_fraction = 1.0);

std::string summary_csv(const ExperimentReport& r);
std::string curves_csv(const ExperimentReport& r);

/// Writes report.json, summary.csv and curves.csv into `dir` (created if needed).
void emit_report(const ExperimentReport& r, const std::filesystem::path& dir);
ExperimentReport read_report(const std::filesystem::path& json_path);

}  // namespace voxmae
