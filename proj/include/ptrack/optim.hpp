#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ptrack {

struct OptimConfig {
  double lr_peak = 1e-3;
  int batch_size = 16;
  double weight_decay = 1e-3;
  int epochs = 20;
  int warmup_steps = -1;  // < 0: one epoch worth of steps
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool deterministic = true;

  void validate() const;
};

/// Probing defaults: 20 epochs, weight decay 1e-3.
OptimConfig probing_config();
/// Adaptation defaults: 40 epochs, weight decay 1e-5.
OptimConfig adaptation_config();

/// Linear warm-up from 0 to lr_peak over `warmup_steps`, then half-cosine
/// decay to 0 at `total_steps`.
double lr_at(long step, long warmup_steps, long total_steps, double lr_peak);

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamWState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One AdamW update: w <- w * (1 - lr * wd), then the bias-corrected Adam
/// step. Throws TrainingFault (carrying the step index) on non-finite
/// gradients.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, const OptimConfig& config);

}  // namespace ptrack
