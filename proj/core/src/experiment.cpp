#include "voxmae/experiment.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "voxmae/config.hpp"
#include "voxmae/error.hpp"
#include "voxmae/volume_io.hpp"

namespace voxmae {

using nlohmann::json;

const char* to_string(InitStrategy s) {
  return s == InitStrategy::Scratch ? "scratch" : "mae-pretrained";
}

InitStrategy init_strategy_from_string(const std::string& s) {
  if (s == "scratch") return InitStrategy::Scratch;
  if (s == "mae-pretrained") return InitStrategy::MaePretrained;
  throw ConfigError("init strategy must be 'scratch' or 'mae-pretrained', got '" + s + "'");
}

void ExperimentDescriptor::validate() const {
  phantom.validate();
  mae.validate();
  seg.validate();
  if (mae.encoder != seg.encoder || mae.patch != seg.patch) {
    throw ConfigError("experiment: pretraining and segmentation encoders must match");
  }
  if (seg.num_classes != phantom.num_classes) {
    throw ConfigError("experiment: seg.num_classes differs from phantom.num_classes");
  }
  if (label_fractions.empty() || seeds.empty()) {
    throw ConfigError("experiment: need at least one label fraction and one seed");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("experiment: threshold must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < label_fractions.size(); ++i) {
    const double f = label_fractions[i];
    if (!(f > 0.0 && f <= 1.0)) {
      throw ConfigError("experiment: label fraction " + std::to_string(f) + " is outside (0, 1]");
    }
    if (std::ceil(f * static_cast<double>(splits.train) - 1e-9) < 1.0) {
      throw ConfigError("experiment: label fraction " + std::to_string(f) + " of " +
                        std::to_string(splits.train) + " labeled items selects none");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (label_fractions[k] == f) throw ConfigError("experiment: duplicate label fraction");
    }
  }
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t k = 0; k < i; ++k)
      if (seeds[k] == seeds[i]) throw ConfigError("experiment: duplicate seed");
  if (splits.pretrain == 0 || splits.train == 0 || splits.validation == 0 || splits.test == 0) {
    throw ConfigError("experiment: every split needs at least one item");
  }
}

void to_json(json& j, const ExperimentDescriptor& d) {
  j = json{{"phantom", d.phantom},
           {"splits", d.splits},
           {"data_seed", d.data_seed},
           {"mae", d.mae},
           {"seg", d.seg},
           {"label_fractions", d.label_fractions},
           {"seeds", d.seeds},
           {"threshold", d.threshold}};
}

void from_json(const json& j, ExperimentDescriptor& d) {
  require_known_keys(j,
                     {"phantom", "splits", "data_seed", "mae", "seg", "label_fractions", "seeds",
                      "threshold"},
                     "experiment");
  try {
    if (j.contains("phantom")) d.phantom = j.at("phantom").get<PhantomConfig>();
    if (j.contains("splits")) d.splits = j.at("splits").get<SplitCounts>();
    if (j.contains("data_seed")) d.data_seed = j.at("data_seed").get<std::uint64_t>();
    if (j.contains("mae")) d.mae = j.at("mae").get<MaeConfig>();
    if (j.contains("seg")) d.seg = j.at("seg").get<SegConfig>();
    if (j.contains("label_fractions")) d.label_fractions = j.at("label_fractions").get<std::vector<double>>();
    if (j.contains("seeds")) d.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("threshold")) d.threshold = j.at("threshold").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment descriptor: ") + e.what());
  }
}

namespace {

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename V>
std::optional<V> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<V>();
}

json metric_json(const MetricReport& m) {
  return json{{"per_class", m.per_class},
              {"mean_foreground", m.mean_foreground},
              {"per_item", m.per_item},
              {"items", m.items}};
}

MetricReport metric_from(const json& j) {
  MetricReport m;
  m.per_class = j.at("per_class").get<std::vector<double>>();
  m.mean_foreground = j.at("mean_foreground").get<double>();
  m.per_item = j.at("per_item").get<std::vector<std::vector<double>>>();
  m.items = j.at("items").get<std::size_t>();
  return m;
}

}  // namespace

void to_json(json& j, const ExperimentReport& r) {
  json arms = json::array();
  for (const auto& a : r.arms) {
    arms.push_back({{"init", to_string(a.init)},
                    {"label_fraction", a.label_fraction},
                    {"seed", a.seed},
                    {"train_items", a.train_items},
                    {"train_loss", a.train_loss},
                    {"val_mean_dice", a.val_dice},
                    {"test", metric_json(a.test)},
                    {"epochs_to_threshold", optional_json(a.epochs_to_threshold)}});
  }
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"init", to_string(c.init)},
                     {"label_fraction", c.label_fraction},
                     {"seeds", c.seeds},
                     {"median_final_mean_dice", c.median_final_dice},
                     {"median_epochs_to_threshold", optional_json(c.median_epochs_to_threshold)}});
  }
  json pretrain = json::array();
  for (std::size_t i = 0; i < r.pretrain_seeds.size(); ++i) {
    pretrain.push_back({{"seed", r.pretrain_seeds[i]}, {"loss", r.pretrain_loss.at(i)}});
  }
  j = json{{"format", "voxmae-experiment-report"},
           {"version", 1},
           {"fingerprint", r.fingerprint},
           {"descriptor", r.descriptor},
           {"pretraining", pretrain},
           {"arms", arms},
           {"cells", cells},
           {"reference", r.reference}};
}

void from_json(const json& j, ExperimentReport& r) {
  if (j.value("format", "") != "voxmae-experiment-report") {
    throw FormatError(FormatError::Kind::MalformedHeader, "experiment report: wrong format tag");
  }
  if (j.value("version", 0) != 1) {
    throw FormatError(FormatError::Kind::UnknownVersion, "experiment report: unknown version");
  }
  try {
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.descriptor = j.at("descriptor");
    r.pretrain_seeds.clear();
    r.pretrain_loss.clear();
    for (const auto& p : j.at("pretraining")) {
      r.pretrain_seeds.push_back(p.at("seed").get<std::uint64_t>());
      r.pretrain_loss.push_back(p.at("loss").get<std::vector<double>>());
    }
    r.arms.clear();
    for (const auto& a : j.at("arms")) {
      ExperimentArm arm;
      arm.init = init_strategy_from_string(a.at("init").get<std::string>());
      arm.label_fraction = a.at("label_fraction").get<double>();
      arm.seed = a.at("seed").get<std::uint64_t>();
      arm.train_items = a.at("train_items").get<std::vector<std::size_t>>();
      arm.train_loss = a.at("train_loss").get<std::vector<double>>();
      arm.val_dice = a.at("val_mean_dice").get<std::vector<double>>();
      arm.test = metric_from(a.at("test"));
      arm.epochs_to_threshold = optional_from<std::size_t>(a.at("epochs_to_threshold"));
      r.arms.push_back(std::move(arm));
    }
    r.cells.clear();
    for (const auto& c : j.at("cells")) {
      CellSummary cell;
      cell.init = init_strategy_from_string(c.at("init").get<std::string>());
      cell.label_fraction = c.at("label_fraction").get<double>();
      cell.seeds = c.at("seeds").get<std::size_t>();
      cell.median_final_dice = c.at("median_final_mean_dice").get<double>();
      cell.median_epochs_to_threshold = optional_from<double>(c.at("median_epochs_to_threshold"));
      r.cells.push_back(cell);
    }
    r.reference = j.at("reference");
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::MalformedHeader, std::string("experiment report: ") + e.what());
  }
}

json reference_block() {
  return json{
      {"status", "paper-reported, not reproduced"},
      {"table_I",
       {{"caption", "Comparison Between Base nnFormer and Proposed MAE-Enhanced nnFormer"},
        {"row", "Dice score"},
        {"Base nnFormer", 86.3},
        {"MAE nnFormer", 88.7}}},
      {"table_II",
       {{"caption", "Comparison of Models on Brain Tumor Segmentation"},
        {"metric", "Average Dice Score (%)"},
        {"rows", json::array({{{"model", "TransUNet"}, {"dice", 83.6}},
                              {{"model", "Swin-UNETR"}, {"dice", 85.1}},
                              {{"model", "UNETR"}, {"dice", 84.3}},
                              {{"model", "nnFormer (Baseline)"}, {"dice", 86.4}},
                              {{"model", "Proposed Method (MAE + nnFormer)"}, {"dice", 88.7}}})}}},
      {"results_text",
       {{"baseline_average_dice_percent", 86}, {"mae_pretrained_average_dice_percent", 88}}},
      {"note",
       "baseline appears as 86 (results text), 86.3 (table I) and 86.4 (table II); kept as "
       "published"}};
}

std::vector<std::size_t> subsample_labeled(const std::vector<std::size_t>& items, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("subsample: fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  const auto take = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(items.size()) - 1e-9));
  if (take == 0) {
    throw ConfigError("subsample: fraction " + std::to_string(fraction) + " of " +
                      std::to_string(items.size()) + " items selects none");
  }
  std::vector<std::size_t> shuffled = items;
  std::ostringstream label;
  label << "subsample/" << fraction;
  Rng rng(seed, label.str());
  rng.shuffle(std::span<std::size_t>(shuffled));
  shuffled.resize(take);
  return shuffled;
}

namespace {

std::optional<double> median_epochs(std::vector<std::optional<std::size_t>> values) {
  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const auto& e : values) v.push_back(e ? static_cast<double>(*e) : kNever);
  const double m = median(std::move(v));
  if (std::isinf(m)) return std::nullopt;
  return m;
}

}  // namespace

std::vector<CellSummary> summarize(const std::vector<ExperimentArm>& arms, double threshold) {
  std::vector<double> fractions;
  for (const auto& a : arms) {
    bool seen = false;
    for (double f : fractions) seen = seen || f == a.label_fraction;
    if (!seen) fractions.push_back(a.label_fraction);
  }
  std::vector<CellSummary> cells;
  for (InitStrategy init : {InitStrategy::Scratch, InitStrategy::MaePretrained}) {
    for (double f : fractions) {
      std::vector<double> finals;
      std::vector<std::optional<std::size_t>> epochs;
      for (const auto& a : arms) {
        if (a.init != init || a.label_fraction != f) continue;
        finals.push_back(a.test.mean_foreground);
        epochs.push_back(epochs_to_threshold(a.val_dice, threshold));
      }
      if (finals.empty()) continue;
      CellSummary c;
      c.init = init;
      c.label_fraction = f;
      c.seeds = finals.size();
      c.median_final_dice = median(finals);
      c.median_epochs_to_threshold = median_epochs(epochs);
      cells.push_back(c);
    }
  }
  return cells;
}

namespace {

/// Runs tasks[0..n) on up to `threads` workers; rethrows the lowest-index failure.
void run_parallel(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentDescriptor& d, std::size_t threads,
                                const ProgressFn& progress) {
  d.validate();
  std::mutex log_mutex;
  auto log = [&](const std::string& message) {
    if (!progress) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    progress(message);
  };

  const Dataset dataset = generate_dataset(d.phantom, d.splits, d.data_seed);

  ExperimentReport report;
  report.descriptor = d;
  report.fingerprint = fingerprint_of(report.descriptor);
  report.reference = reference_block();
  report.pretrain_seeds = d.seeds;

  std::vector<PretrainResult> pretrained(d.seeds.size());
  run_parallel(d.seeds.size(), threads, [&](std::size_t i) {
    MaeConfig mae = d.mae;
    mae.seed = d.seeds[i];
    pretrained[i] = pretrain(dataset, mae);
    log("pretrain seed " + std::to_string(mae.seed) + ": final loss " +
        std::to_string(pretrained[i].loss_curve.back()));
  });
  for (const auto& p : pretrained) report.pretrain_loss.push_back(p.loss_curve);

  struct Task {
    InitStrategy init;
    double fraction;
    std::size_t seed_index;
  };
  std::vector<Task> tasks;
  for (InitStrategy init : {InitStrategy::Scratch, InitStrategy::MaePretrained})
    for (double f : d.label_fractions)
      for (std::size_t s = 0; s < d.seeds.size(); ++s) tasks.push_back({init, f, s});

  report.arms.resize(tasks.size());
  run_parallel(tasks.size(), threads, [&](std::size_t i) {
    const Task& t = tasks[i];
    const std::uint64_t seed = d.seeds[t.seed_index];
    SegConfig seg = d.seg;
    seg.seed = seed;
    seg.init = "scratch";
    ExperimentArm& arm = report.arms[i];
    arm.init = t.init;
    arm.label_fraction = t.fraction;
    arm.seed = seed;
    arm.train_items = subsample_labeled(dataset.indices(Split::TrainLabeled), t.fraction, seed);
    const Checkpoint* init =
        t.init == InitStrategy::MaePretrained ? &pretrained[t.seed_index].checkpoint : nullptr;
    FinetuneResult run = finetune(dataset, seg, init, arm.train_items);
    arm.train_loss = std::move(run.train_loss);
    arm.val_dice = std::move(run.val_dice);
    SegModel<float> model(seg, dataset.config.extents, seed);
    import_parameters(model.parameters(), run.checkpoint.params);
    arm.test = evaluate(model, dataset, dataset.indices(Split::Test));
    arm.epochs_to_threshold = epochs_to_threshold(arm.val_dice, d.threshold);
    log(std::string("arm ") + to_string(t.init) + " fraction " + std::to_string(t.fraction) +
        " seed " + std::to_string(seed) + ": test mean Dice " +
        std::to_string(arm.test.mean_foreground));
  });
  report.cells = summarize(report.arms, d.threshold);
  return report;
}

bool DirectionalChecks::convergence_holds() const {
  if (!epochs_mae && !epochs_scratch) return true;
  if (!epochs_mae) return false;
  if (!epochs_scratch) return true;
  return *epochs_mae <= *epochs_scratch;
}

DirectionalChecks directional_checks(const ExperimentReport& r, double low_fraction,
                                     double high_fraction) {
  auto find = [&](InitStrategy init, double f) -> const CellSummary& {
    for (const auto& c : r.cells) {
      if (c.init == init && c.label_fraction == f) return c;
    }
    throw ContractError(std::string("report has no cell for ") + to_string(init) + " at fraction " +
                        std::to_string(f));
  };
  DirectionalChecks out;
  out.low_fraction = low_fraction;
  out.high_fraction = high_fraction;
  out.low_dice_mae = find(InitStrategy::MaePretrained, low_fraction).median_final_dice;
  out.low_dice_scratch = find(InitStrategy::Scratch, low_fraction).median_final_dice;
  const CellSummary& high_mae = find(InitStrategy::MaePretrained, high_fraction);
  const CellSummary& high_scratch = find(InitStrategy::Scratch, high_fraction);
  out.high_dice_mae = high_mae.median_final_dice;
  out.high_dice_scratch = high_scratch.median_final_dice;
  out.epochs_mae = high_mae.median_epochs_to_threshold;
  out.epochs_scratch = high_scratch.median_epochs_to_threshold;
  return out;
}

namespace {

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::string summary_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "training_strategy,encoder_initialization,label_fraction,seeds,median_final_mean_dice,"
         "median_epochs_to_threshold\n";
  for (const auto& c : r.cells) {
    const bool mae = c.init == InitStrategy::MaePretrained;
    out << (mae ? "self-supervised+supervised" : "fully-supervised") << ','
        << to_string(c.init) << ',' << format_double(c.label_fraction) << ',' << c.seeds << ','
        << format_double(c.median_final_dice) << ','
        << (c.median_epochs_to_threshold ? format_double(*c.median_epochs_to_threshold) : "")
        << '\n';
  }
  return out.str();
}

std::string curves_csv(const ExperimentReport& r) {
  std::ostringstream out;
  out << "init,label_fraction,seed,epoch,train_loss,val_mean_dice\n";
  for (const auto& a : r.arms) {
    for (std::size_t e = 0; e < a.train_loss.size(); ++e) {
      out << to_string(a.init) << ',' << format_double(a.label_fraction) << ',' << a.seed << ','
          << e + 1 << ',' << format_double(a.train_loss[e]) << ','
          << format_double(a.val_dice.at(e)) << '\n';
    }
  }
  return out.str();
}

void emit_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + dir.string() + "': " + ec.message());
  auto write_text = [&](const std::string& name, const std::string& text) {
    write_file_bytes(dir / name, std::vector<std::uint8_t>(text.begin(), text.end()));
  };
  write_text("report.json", json(r).dump(2) + "\n");
  write_text("summary.csv", summary_csv(r));
  write_text("curves.csv", curves_csv(r));
}

ExperimentReport read_report(const std::filesystem::path& json_path) {
  const auto bytes = read_file_bytes(json_path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::MalformedHeader,
                      "experiment report '" + json_path.string() + "': " + e.what());
  }
  return j.get<ExperimentReport>();
}

}  // namespace voxmae
