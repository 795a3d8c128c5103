#include "sumn/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sumn {

double finite_diff_check(const std::function<double()>& loss_fn, std::span<float> params,
                         std::span<const float> analytic, float h, size_t max_coords,
                         uint64_t seed, double zero_floor) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("finite_diff_check: gradient size mismatch");
  }
  if (!(h > 0.0f)) throw std::invalid_argument("finite_diff_check: h must be positive");

  std::vector<size_t> coords(params.size());
  std::iota(coords.begin(), coords.end(), size_t{0});
  if (coords.size() > max_coords) {
    Rng rng(seed);
    for (size_t i = 0; i < max_coords; ++i) {
      size_t j = i + rng.below(coords.size() - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(max_coords);
  }

  double max_rel = 0.0;
  for (size_t idx : coords) {
    const float saved = params[idx];
    const float hi = saved + h;
    const float lo = saved - h;
    params[idx] = hi;
    const double plus = loss_fn();
    params[idx] = lo;
    const double minus = loss_fn();
    params[idx] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw std::runtime_error("finite_diff_check: non-finite loss");
    }
    // Divide by the realized interval; float rounding of saved +- h would
    // otherwise dominate the difference quotient.
    const double numeric = (plus - minus) / (static_cast<double>(hi) - lo);
    const double a = analytic[idx];
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), zero_floor});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace sumn
