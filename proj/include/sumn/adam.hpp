#pragma once

#include <cstdint>
#include <span>

#include "sumn/matrix.hpp"

namespace sumn {

// First/second moment accumulators for one parameter tensor.
struct AdamState {
  Vector m;
  Vector v;
  int64_t t = 0;

  AdamState() = default;
  explicit AdamState(size_t n) : m(n, 0.0f), v(n, 0.0f) {}
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// One bias-corrected Adam update. Increments state.t.
void adam_step(std::span<float> param, std::span<const float> grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace sumn
