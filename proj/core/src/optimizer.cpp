#include "voxmae/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "voxmae/error.hpp"

namespace voxmae {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0) || !(min_lr >= 0.0) || min_lr > lr) {
    throw ConfigError("optimizer: need 0 <= min_lr <= lr and lr > 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0) || !(weight_decay >= 0.0) || !(clip_norm > 0.0)) {
    throw ConfigError("optimizer: eps and clip_norm must be positive, weight_decay non-negative");
  }
}

double scheduled_lr(const OptimizerConfig& config, std::size_t step, std::size_t warmup_steps,
                    std::size_t total_steps) {
  if (step < warmup_steps) {
    return config.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::size_t decay_steps = total_steps > warmup_steps + 1 ? total_steps - warmup_steps - 1 : 1;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps));
  return config.min_lr +
         0.5 * (config.lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
GradientAccumulator<T>::GradientAccumulator(const std::vector<Tensor<T>>& params)
    : params_(params) {
  sums_.reserve(params_.size());
  for (const auto& p : params_) sums_.emplace_back(p.numel(), T(0));
}

template <typename T>
void GradientAccumulator<T>::add(const GradientMap<T>& grads) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!grads.contains(params_[i])) continue;
    const auto g = grads.of(params_[i]).data();
    auto& dst = sums_[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
  }
}

template <typename T>
void GradientAccumulator<T>::scale(double factor) {
  for (auto& s : sums_)
    for (auto& v : s) v = static_cast<T>(v * factor);
}

template <typename T>
double GradientAccumulator<T>::global_norm() const {
  double total = 0.0;
  for (const auto& s : sums_)
    for (T v : s) total += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(total);
}

template <typename T>
void GradientAccumulator<T>::clear() {
  for (auto& s : sums_) std::fill(s.begin(), s.end(), T(0));
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, OptimizerConfig config, std::size_t warmup_steps,
                std::size_t total_steps, std::vector<bool> frozen)
    : params_(std::move(params)),
      config_(config),
      warmup_steps_(warmup_steps),
      total_steps_(total_steps),
      frozen_(std::move(frozen)) {
  config_.validate();
  if (frozen_.empty()) frozen_.assign(params_.size(), false);
  if (frozen_.size() != params_.size()) throw ContractError("AdamW: frozen mask size mismatch");
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
double AdamW<T>::current_lr() const {
  return scheduled_lr(config_, step_, warmup_steps_, total_steps_);
}

template <typename T>
double AdamW<T>::step(GradientAccumulator<T>& grads) {
  const double norm = grads.global_norm();
  if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient norm");
  if (norm > config_.clip_norm) grads.scale(config_.clip_norm / (norm + 1e-12));

  const double lr = current_lr();
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  const auto& g = grads.values();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (frozen_[i]) continue;
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    // Decay applies to weight matrices only, not to biases or norm parameters.
    const double decay = params_[i].rank() >= 2 ? config_.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[i][j];
      m[j] = static_cast<T>(config_.beta1 * m[j] + (1.0 - config_.beta1) * gj);
      v[j] = static_cast<T>(config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      const double updated =
          w[j] - lr * (mhat / (std::sqrt(vhat) + config_.eps) + decay * static_cast<double>(w[j]));
      w[j] = static_cast<T>(updated);
    }
  }
  return norm;
}

template class GradientAccumulator<float>;
template class GradientAccumulator<double>;
template class AdamW<float>;
template class AdamW<double>;

}  // namespace voxmae
