#include <benchmark/benchmark.h>

#include <vector>

#include "voxmae/mae.hpp"
#include "voxmae/ops.hpp"
#include "voxmae/phantom.hpp"
#include "voxmae/rng.hpp"
#include "voxmae/segmentation.hpp"

namespace {

using namespace voxmae;

Tensor<float> random_tensor(Shape shape, Rng& rng) {
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Tensor<float>::constant(std::move(shape), std::move(v));
}

Volume phantom_volume() {
  Rng rng(0, "bench/phantom");
  return normalize_volume(generate_phantom(PhantomConfig{}, rng).first);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(0, "bench/matmul");
  const auto a = random_tensor({n, n}, rng);
  const auto b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(512);

void BM_SoftmaxRows(benchmark::State& state) {
  Rng rng(0, "bench/softmax");
  const auto x = random_tensor({512, 512}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::softmax(x, 1));
}
BENCHMARK(BM_SoftmaxRows);

void BM_MaeStep(benchmark::State& state) {
  MaeConfig config;
  MaeModel<float> model(config, {32, 32, 32}, 0);
  const Volume v = phantom_volume();
  Rng rng(0, "bench/mask");
  const MaskPlan m = sample_mask(model.grid(), config.mask_ratio, rng);
  for (auto _ : state) {
    const auto out = model.forward(v, m);
    benchmark::DoNotOptimize(backward(out.loss));
  }
}
BENCHMARK(BM_MaeStep)->Unit(benchmark::kMillisecond);

void BM_SegStep(benchmark::State& state) {
  SegConfig config;
  SegModel<float> model(config, {32, 32, 32}, 0);
  Rng rng(0, "bench/phantom");
  auto [volume, labels] = generate_phantom(PhantomConfig{}, rng);
  const Volume v = normalize_volume(volume);
  for (auto _ : state) {
    const auto loss = dice_ce_loss(model.forward(v), labels, config.dice_weight, config.ce_weight,
                                   config.dice_eps);
    benchmark::DoNotOptimize(backward(loss));
  }
}
BENCHMARK(BM_SegStep)->Unit(benchmark::kMillisecond);

void BM_SegPredict(benchmark::State& state) {
  SegModel<float> model(SegConfig{}, {32, 32, 32}, 0);
  const Volume v = phantom_volume();
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(v));
}
BENCHMARK(BM_SegPredict)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
