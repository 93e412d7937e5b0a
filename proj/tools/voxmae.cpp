// voxmae: synthetic data generation, masked pretraining, segmentation
// fine-tuning, evaluation and the scratch-vs-pretrained experiment.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxmae/checkpoint.hpp"
#include "voxmae/config.hpp"
#include "voxmae/diagnostics.hpp"
#include "voxmae/error.hpp"
#include "voxmae/experiment.hpp"
#include "voxmae/mae.hpp"
#include "voxmae/metrics.hpp"
#include "voxmae/segmentation.hpp"
#include "voxmae/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxmae;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct GenFlags {
  std::string out_dir;
  std::vector<std::size_t> counts;
  std::vector<std::size_t> extents;
  std::optional<double> noise_sigma;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
  std::size_t threads = 1;
};

json read_config(const Globals& g) {
  return g.config.empty() ? json::object() : load_json_file(g.config);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

int gen_data(const Globals& g, const GenFlags& f) {
  const json cfg = read_config(g);
  require_known_keys(cfg, {"phantom", "splits", "seed"}, "gen-data config");
  PhantomConfig phantom = cfg.value("phantom", json::object()).get<PhantomConfig>();
  SplitCounts splits = cfg.value("splits", json::object()).get<SplitCounts>();
  if (!f.counts.empty()) splits = {f.counts[0], f.counts[1], f.counts[2], f.counts[3]};
  if (!f.extents.empty()) phantom.extents = {f.extents[0], f.extents[1], f.extents[2]};
  if (f.noise_sigma) phantom.noise_sigma = *f.noise_sigma;
  const std::uint64_t seed = g.seed.value_or(cfg.value("seed", std::uint64_t{0}));
  const Dataset ds = generate_dataset(phantom, splits, seed);
  const std::string dir = f.out_dir.empty() ? g.out : f.out_dir;
  write_dataset(ensure_dir(dir), ds);
  std::cout << "wrote " << ds.items.size() << " volumes to " << dir << "\n";
  return kOk;
}

int run_pretrain(const Globals& g, const std::string& data_dir) {
  MaeConfig config = read_config(g).get<MaeConfig>();
  if (g.seed) config.seed = *g.seed;
  const Dataset ds = read_dataset(data_dir);
  const PretrainResult r = pretrain(ds, config, [](std::size_t epoch, double loss) {
    std::cout << "epoch " << epoch << " loss " << loss << std::endl;
  });
  const fs::path out = ensure_dir(g.out);
  save_checkpoint(out / "encoder.ckpt", r.checkpoint);
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < r.loss_curve.size(); ++e) {
    csv += std::to_string(e + 1) + "," + json(r.loss_curve[e]).dump() + "\n";
  }
  write_text(out / "pretrain_loss.csv", csv);
  std::cout << "checkpoint " << (out / "encoder.ckpt").string() << "\n";
  return kOk;
}

int run_finetune(const Globals& g, const std::string& data_dir, const std::string& init,
                 bool freeze) {
  SegConfig config = read_config(g).get<SegConfig>();
  if (g.seed) config.seed = *g.seed;
  if (freeze) config.freeze_encoder = true;
  if (!init.empty()) config.init = init;
  const Dataset ds = read_dataset(data_dir);
  const FinetuneResult r =
      finetune(ds, config, [](std::size_t epoch, double loss, double dice) {
        std::cout << "epoch " << epoch << " loss " << loss << " val_mean_dice " << dice
                  << std::endl;
      });
  const fs::path out = ensure_dir(g.out);
  save_checkpoint(out / "model.ckpt", r.checkpoint);
  std::string csv = "epoch,train_loss,val_mean_dice\n";
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + json(r.train_loss[e]).dump() + "," +
           json(r.val_dice[e]).dump() + "\n";
  }
  write_text(out / "curves.csv", csv);
  std::cout << "checkpoint " << (out / "model.ckpt").string() << "\n";
  return kOk;
}

int run_evaluate(const Globals& g, const std::string& data_dir, const std::string& ckpt_path,
                 const std::string& split_name) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  SegConfig config = ckpt.config.get<SegConfig>();
  const Dataset ds = read_dataset(data_dir);
  SegModel<float> model(config, ds.config.extents, config.seed);
  import_parameters(model.parameters(), ckpt.params);
  const MetricReport r = evaluate(model, ds, ds.indices(split_from_string(split_name)));
  const json out{{"split", split_name},
                 {"items", r.items},
                 {"per_class_dice", r.per_class},
                 {"mean_foreground_dice", r.mean_foreground},
                 {"per_item_dice", r.per_item}};
  write_text(ensure_dir(g.out) / "metrics.json", out.dump(2) + "\n");
  std::cout << "mean foreground Dice " << r.mean_foreground << " over " << r.items << " items\n";
  return kOk;
}

int run_experiment_cmd(const Globals& g) {
  ExperimentDescriptor d = read_config(g).get<ExperimentDescriptor>();
  if (g.seed) d.data_seed = *g.seed;
  const ExperimentReport r = run_experiment(d, g.threads, [](const std::string& message) {
    std::cout << message << std::endl;
  });
  emit_report(r, g.out);
  std::cout << summary_csv(r);
  return kOk;
}

int run_gradcheck(const Globals& g) {
  const std::uint64_t seed = g.seed.value_or(0);
  bool ok = true;
  auto show = [&](const GradCheckResult& r) {
    ok = ok && r.passed();
    std::cout << (r.passed() ? "ok   " : "FAIL ") << r.name << " max_rel_error " << r.max_rel_error
              << " (tolerance " << r.tolerance << ")\n";
  };
  for (const auto& r : op_gradient_checks(seed)) show(r);
  show(mae_gradient_check(seed));
  show(seg_gradient_check(seed));
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked-autoencoder pretraining for volumetric transformer segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed (overrides the config)");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Concurrent experiment arms")->check(CLI::PositiveNumber);

  std::string data_dir, init, checkpoint, split = "test";
  GenFlags gen_flags;
  bool freeze = false;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  gen->add_option("--out-dir", gen_flags.out_dir, "Dataset directory (defaults to --out)");
  gen->add_option("--counts", gen_flags.counts, "pretrain,train,validation,test")
      ->delimiter(',')
      ->expected(4);
  gen->add_option("--extents", gen_flags.extents, "D,H,W")->delimiter(',')->expected(3);
  gen->add_option("--noise-sigma", gen_flags.noise_sigma, "Gaussian noise sigma");
  auto* pre = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
  pre->add_option("--data-dir", data_dir, "Dataset directory")->required();
  auto* fin = app.add_subcommand("finetune", "Segmentation fine-tuning");
  fin->add_option("--data-dir", data_dir, "Dataset directory")->required();
  fin->add_option("--init", init, "scratch | checkpoint:PATH");
  fin->add_flag("--freeze-encoder", freeze, "Keep transferred encoder weights fixed");
  auto* eva = app.add_subcommand("evaluate", "Dice of a fine-tuned checkpoint");
  eva->add_option("--data-dir", data_dir, "Dataset directory")->required();
  eva->add_option("--checkpoint", checkpoint, "Fine-tuned checkpoint")->required();
  eva->add_option("--split", split, "pretrain-unlabeled | train-labeled | validation | test");
  auto* exp = app.add_subcommand("experiment", "Scratch vs pretrained over label fractions and seeds");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  for (auto* sub : {gen, pre, fin, eva, exp, grad}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return gen_data(g, gen_flags);
    if (pre->parsed()) return run_pretrain(g, data_dir);
    if (fin->parsed()) return run_finetune(g, data_dir, init, freeze);
    if (eva->parsed()) return run_evaluate(g, data_dir, checkpoint, split);
    if (exp->parsed()) return run_experiment_cmd(g);
    if (grad->parsed()) return run_gradcheck(g);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
