#pragma once

#include <functional>
#include <span>

#include "sumn/matrix.hpp"

namespace sumn {

// Compares an analytic gradient against central finite differences of
// loss_fn, perturbing params in place. Checks every coordinate when the
// tensor has at most max_coords entries, otherwise a seeded sample of
// max_coords of them. Returns the max relative error
//   |analytic - numeric| / max(|analytic|, |numeric|, zero_floor).
// zero_floor defaults to 1e-8; full-model checks raise it to 1e-4 so
// directions whose true gradient is zero (e.g. a uniform shift of all
// attention logits) are compared absolutely instead of against float noise.
// Throws if loss_fn produces a non-finite value.
double finite_diff_check(const std::function<double()>& loss_fn, std::span<float> params,
                         std::span<const float> analytic, float h = 1e-3f,
                         size_t max_coords = SIZE_MAX, uint64_t seed = 0,
                         double zero_floor = 1e-8);

}  // namespace sumn
