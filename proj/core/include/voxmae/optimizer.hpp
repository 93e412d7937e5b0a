#pragma once

#include <cstddef>
#include <vector>

#include "voxmae/parameters.hpp"
#include "voxmae/tensor.hpp"

namespace voxmae {

/// Decoupled-weight-decay Adam with linear warmup, cosine decay and global
/// gradient-norm clipping.
struct OptimizerConfig {
  double lr = 1e-3;
  double min_lr = 1e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t warmup_epochs = 5;
  double clip_norm = 1.0;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// Learning rate at 0-based `step`: linear ramp over the warmup steps, then
/// cosine from lr down to min_lr at the final step.
double scheduled_lr(const OptimizerConfig& config, std::size_t step, std::size_t warmup_steps,
                    std::size_t total_steps);

/// Sums per-item gradients in call order, aligned with a parameter list.
template <typename T>
class GradientAccumulator {
 public:
  explicit GradientAccumulator(const std::vector<Tensor<T>>& params);

  void add(const GradientMap<T>& grads);
  void scale(double factor);
  double global_norm() const;
  void clear();

  const std::vector<std::vector<T>>& values() const { return sums_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> sums_;
};

template <typename T>
class AdamW {
 public:
  /// `frozen[i]` excludes params[i] from updates; empty means none frozen.
  AdamW(std::vector<Tensor<T>> params, OptimizerConfig config, std::size_t warmup_steps,
        std::size_t total_steps, std::vector<bool> frozen = {});

  /// Clips `grads` to the configured global norm (in place), then applies one
  /// update. Returns the pre-clip norm.
  double step(GradientAccumulator<T>& grads);

  std::size_t steps_taken() const noexcept { return step_; }
  double current_lr() const;

 private:
  std::vector<Tensor<T>> params_;
  OptimizerConfig config_;
  std::size_t warmup_steps_;
  std::size_t total_steps_;
  std::vector<bool> frozen_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace voxmae
