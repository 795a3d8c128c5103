#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace sumn {

// Dense row-major single-precision matrix. All model tensors live in this
// type; loss and metric accumulation happens in double.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

using Vector = std::vector<float>;

// Counter-based generator (splitmix64). State is a single 64-bit counter, so
// identical seeds give identical streams on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(uniform()) * (hi - lo);
  }

  // Standard normal via Box-Muller.
  float normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                              std::cos(2.0 * 3.14159265358979323846 * u2));
  }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

// Derives an independent stream for substream `k` of a base seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t k) {
  Rng r(seed ^ (0xD1B54A32D192ED03ULL * (k + 1)));
  return r.next_u64();
}

inline bool all_finite(const Vector& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

inline double l2_norm(const Vector& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

inline double l2_norm(const Matrix& m) { return l2_norm(m.data); }

}  // namespace sumn
