#include "ptrack/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ptrack/error.hpp"

namespace ptrack {

void OptimConfig::validate() const {
  if (!(lr_peak >= 0.0) || !std::isfinite(lr_peak)) throw InvalidConfig("lr_peak must be >= 0");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (epochs < 0) throw InvalidConfig("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidConfig("betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidConfig("epsilon must be positive");
}

OptimConfig probing_config() { return OptimConfig{}; }

OptimConfig adaptation_config() {
  OptimConfig c;
  c.weight_decay = 1e-5;
  c.epochs = 40;
  return c;
}

double lr_at(long step, long warmup_steps, long total_steps, double lr_peak) {
  if (total_steps <= 0) return 0.0;
  if (step < 0) step = 0;
  if (step > total_steps) step = total_steps;
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr_peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const long decay = total_steps - warmup_steps;
  if (decay <= 0) return step >= total_steps ? 0.0 : lr_peak;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(decay);
  return lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, const OptimConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidInput("adamw_step: parameter, gradient and state sizes differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw TrainingFault("non-finite gradient", state.step);
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] = params[i] * decay - lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

}  // namespace ptrack
