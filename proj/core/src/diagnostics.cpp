#include "voxmae/diagnostics.hpp"

#include <functional>

#include "voxmae/gradcheck.hpp"
#include "voxmae/ops.hpp"
#include "voxmae/phantom.hpp"

namespace voxmae {

namespace {

using Fn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

Tensor<double> random_parameter(const std::string& name, Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor<double>::parameter(name, std::move(shape), std::move(v));
}

/// Scalar <w, out> with w fixed, so every output entry receives a distinct upstream gradient.
Tensor<double> probe(const Tensor<double>& out, std::uint64_t seed) {
  Rng rng(seed, "probe/" + to_string(out.shape()));
  std::vector<double> w(out.numel());
  for (auto& x : w) x = rng.normal();
  return ops::sum(ops::mul(out, Tensor<double>::constant(out.shape(), std::move(w))));
}

GradCheckResult check(const std::string& name, std::vector<Tensor<double>> inputs, const Fn& f,
                      double tolerance) {
  return GradCheckResult{name, grad_check(f, inputs), tolerance};
}

/// Spreads the initial weights so no gradient entry is vanishingly small.
void rescale_parameters(ParameterStore<double>& store, std::uint64_t seed) {
  for (const auto& p : store.all()) {
    Rng rng(seed, "rescale/" + p.name());
    Tensor<double> t = p;
    for (auto& v : t.mutable_data()) v += 0.3 * rng.normal();
  }
}

Volume random_volume(const Extents& e, Rng& rng) {
  std::vector<float> v(voxel_count(e));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Volume(e, std::move(v));
}

}  // namespace

MaeConfig tiny_mae_config() {
  MaeConfig c;
  c.patch = {4, 4, 4};
  c.encoder.dims = {6, 12};
  c.encoder.depths = {1, 1};
  c.encoder.heads = {2, 2};
  c.encoder.kinds = {AttentionKind::Local, AttentionKind::Global};
  c.encoder.window = {2, 2, 2};
  c.encoder.mlp_ratio = 2;
  c.mask_ratio = 0.5;
  c.decoder_dim = 6;
  c.decoder_depth = 1;
  c.decoder_heads = 2;
  return c;
}

SegConfig tiny_seg_config() {
  SegConfig c;
  const MaeConfig m = tiny_mae_config();
  c.patch = m.patch;
  c.encoder = m.encoder;
  c.num_classes = 3;
  return c;
}

std::vector<GradCheckResult> op_gradient_checks(std::uint64_t seed, double tol) {
  Rng rng(seed, "opcheck");
  std::vector<GradCheckResult> out;
  auto a = random_parameter("a", {3, 4}, rng);
  auto b = random_parameter("b", {3, 4}, rng);
  auto bias = random_parameter("bias", {4}, rng);
  const auto s = seed;

  out.push_back(check("add", {a, b}, [&](auto in) { return probe(ops::add(in[0], in[1]), s); }, tol));
  out.push_back(check("sub", {a, b}, [&](auto in) { return probe(ops::sub(in[0], in[1]), s); }, tol));
  out.push_back(check("mul", {a, b}, [&](auto in) { return probe(ops::mul(in[0], in[1]), s); }, tol));
  out.push_back(check("scale", {a}, [&](auto in) { return probe(ops::scale(in[0], 1.7), s); }, tol));
  out.push_back(check("add_bias", {a, bias},
                      [&](auto in) { return probe(ops::add_bias(in[0], in[1]), s); }, tol));
  {
    auto x = random_parameter("x", {2, 3, 4}, rng);
    auto w = random_parameter("w", {4, 5}, rng);
    out.push_back(check("matmul", {x, w},
                        [&](auto in) { return probe(ops::matmul(in[0], in[1]), s); }, tol));
    auto lb = random_parameter("lb", {5}, rng);
    out.push_back(check("linear", {x, w, lb},
                        [&](auto in) { return probe(ops::linear(in[0], in[1], &in[2]), s); }, tol));
    out.push_back(check("reshape", {x},
                        [&](auto in) { return probe(ops::reshape(in[0], {4, 6}), s); }, tol));
    out.push_back(check("permute", {x},
                        [&](auto in) { return probe(ops::permute(in[0], {2, 0, 1}), s); }, tol));
    out.push_back(check("transpose", {x},
                        [&](auto in) { return probe(ops::transpose(in[0]), s); }, tol));
    out.push_back(check("softmax", {x},
                        [&](auto in) { return probe(ops::softmax(in[0], 1), s); }, tol));
    auto g = random_parameter("gamma", {4}, rng);
    auto be = random_parameter("beta", {4}, rng);
    out.push_back(check("layer_norm", {x, g, be},
                        [&](auto in) { return probe(ops::layer_norm(in[0], in[1], in[2]), s); }, tol));
    out.push_back(check("gelu", {x}, [&](auto in) { return probe(ops::gelu(in[0]), s); }, tol));
    out.push_back(check("sum", {x}, [&](auto in) { return ops::sum(ops::mul(in[0], in[0])); }, tol));
    out.push_back(check("mean", {x}, [&](auto in) { return ops::mean(ops::mul(in[0], in[0])); }, tol));
  }
  {
    const std::vector<std::size_t> rows{2, 0, 2, 1};
    out.push_back(check("gather_rows", {a},
                        [&](auto in) { return probe(ops::gather_rows<double>(in[0], rows), s); }, tol));
    const std::vector<std::size_t> idx{11, 0, 5, 5, 7, 3};
    out.push_back(check("gather_elements", {a}, [&](auto in) {
      return probe(ops::gather_elements<double>(in[0], idx, {2, 3}), s);
    }, tol));
    auto c = random_parameter("c", {3, 2}, rng);
    out.push_back(check("concat", {a, c}, [&](auto in) {
      return probe(ops::concat<double>({in[0], in[1]}, 1), s);
    }, tol));
  }
  {
    auto logits = random_parameter("logits", {3, 2, 2, 2}, rng);
    LabelMap labels;
    labels.extents = {2, 2, 2};
    labels.num_classes = 3;
    labels.classes = {0, 1, 2, 1, 0, 0, 2, 1};
    out.push_back(check("dice_ce_loss", {logits},
                        [&](auto in) { return dice_ce_loss(in[0], labels); }, tol));
  }
  {
    const PatchGrid grid = PatchGrid::make({4, 4, 4}, {2, 2, 2});
    auto pred = random_parameter("pred", {grid.count, grid.patch_dim}, rng);
    auto target = random_parameter("target", {grid.count, grid.patch_dim}, rng);
    Rng mask_rng(seed, "opcheck/mask");
    const MaskPlan m = sample_mask(grid, 0.5, mask_rng);
    out.push_back(check("masked_mse_loss", {pred, target},
                        [&](auto in) { return masked_mse_loss(in[0], in[1], m); }, tol));
    auto tokens = random_parameter("tokens", {grid.count, 2 * grid.patch_dim}, rng);
    out.push_back(check("unpatchify_channels", {tokens}, [&](auto in) {
      return probe(unpatchify_channels(in[0], grid, 2), s);
    }, tol));
    auto visible = random_parameter("visible", {m.visible.size(), 3}, rng);
    auto mask_token = random_parameter("mask_token", {3}, rng);
    out.push_back(check("scatter_full", {visible, mask_token}, [&](auto in) {
      return probe(scatter_full(in[0], in[1], m).tokens, s);
    }, tol));
  }
  {
    ParameterStore<double> store(seed);
    MultiHeadAttention<double> attn(store, "attn", 4, 2);
    rescale_parameters(store, seed);
    auto x = random_parameter("x", {8, 4}, rng);
    std::vector<Tensor<double>> inputs{x};
    for (const auto& p : store.all()) inputs.push_back(p);
    const WindowPartition global = WindowPartition::global(8);
    const WindowPartition local = WindowPartition::local({2, 2, 2}, {1, 2, 2});
    out.push_back(check("attention/global", inputs,
                        [&](auto in) { return probe(attn(in[0], global), s); }, tol));
    out.push_back(check("attention/local", inputs,
                        [&](auto in) { return probe(attn(in[0], local), s); }, tol));
  }
  return out;
}

GradCheckResult mae_gradient_check(std::uint64_t seed, double tolerance) {
  const MaeConfig config = tiny_mae_config();
  MaeModel<double> model(config, {8, 8, 8}, seed);
  rescale_parameters(model.parameters(), seed);
  Rng rng(seed, "mae-check");
  const Volume v = random_volume({8, 8, 8}, rng);
  const MaskPlan m = sample_mask(model.grid(), config.mask_ratio, rng);
  std::vector<Tensor<double>> params = model.parameters().all();
  return check("mae_model", params, [&](auto) { return model.forward(v, m).loss; }, tolerance);
}

GradCheckResult seg_gradient_check(std::uint64_t seed, double tolerance) {
  const SegConfig config = tiny_seg_config();
  SegModel<double> model(config, {8, 8, 8}, seed);
  rescale_parameters(model.parameters(), seed);
  Rng rng(seed, "seg-check");
  const Volume v = random_volume({8, 8, 8}, rng);
  LabelMap labels;
  labels.extents = {8, 8, 8};
  labels.num_classes = config.num_classes;
  labels.classes.resize(512);
  for (auto& c : labels.classes) c = static_cast<std::uint8_t>(rng.below(config.num_classes));
  std::vector<Tensor<double>> params = model.parameters().all();
  return check("seg_model", params,
               [&](auto) { return dice_ce_loss(model.forward(v), labels); }, tolerance);
}

}  // namespace voxmae
