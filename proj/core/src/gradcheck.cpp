#include "voxmae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "voxmae/error.hpp"

namespace voxmae {

double grad_check(const ScalarFunction& f, std::span<Tensor<double>> inputs, double eps) {
  if (!(eps > 0.0)) throw ParameterError("grad_check: eps must be positive");
  for (const auto& in : inputs) {
    if (!in.requires_grad()) {
      throw ContractError("grad_check: input '" + in.name() + "' does not require a gradient");
    }
  }
  const std::span<const Tensor<double>> view(inputs.data(), inputs.size());
  const Tensor<double> loss = f(view);
  if (loss.numel() != 1) {
    throw ContractError("grad_check: function returned shape " + to_string(loss.shape()) +
                        ", expected a scalar");
  }
  for (const Node<double>* node : topological_order(loss)) {
    if (!node->differentiable) {
      throw ContractError("grad_check: graph contains non-differentiable op '" + node->op + "'");
    }
  }
  const GradientMap<double> grads = backward(loss);

  auto evaluate = [&] {
    NoGradGuard no_grad;
    return f(view).item();
  };
  double worst = 0.0;
  for (auto& in : inputs) {
    const Tensor<double> analytic = grads.of(in);
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate();
      values[i] = saved - eps;
      const double minus = evaluate();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace voxmae
