#include "sumn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sumn {

void adam_step(std::span<float> param, std::span<const float> grad, AdamState& state,
               const AdamConfig& cfg) {
  if (param.size() != grad.size() || state.m.size() != param.size() ||
      state.v.size() != param.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (cfg.beta1 < 0.0f || cfg.beta1 >= 1.0f || cfg.beta2 < 0.0f || cfg.beta2 >= 1.0f) {
    throw std::invalid_argument("adam_step: betas must be in [0, 1)");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), state.t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), state.t);
  for (size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0f - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0f - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= static_cast<float>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

}  // namespace sumn
