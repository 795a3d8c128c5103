#include "sumn/ops.hpp"

#include <limits>
#include <stdexcept>

namespace sumn {

Vector linear(const Matrix& W, const Vector& x) {
  if (static_cast<size_t>(W.cols) != x.size()) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Vector y(W.rows, 0.0f);
  for (int r = 0; r < W.rows; ++r) {
    const float* wr = W.row(r);
    double acc = 0.0;
    for (int c = 0; c < W.cols; ++c) acc += static_cast<double>(wr[c]) * x[c];
    y[r] = static_cast<float>(acc);
  }
  return y;
}

void linear_backward(const Matrix& W, const Vector& x, const Vector& g, Matrix& dW,
                     Vector& dx) {
  if (static_cast<size_t>(W.cols) != x.size() || static_cast<size_t>(W.rows) != g.size() ||
      !W.same_shape(dW)) {
    throw std::invalid_argument("linear_backward: shape mismatch");
  }
  dx.assign(x.size(), 0.0f);
  for (int r = 0; r < W.rows; ++r) {
    const float gr = g[r];
    const float* wr = W.row(r);
    float* dwr = dW.row(r);
    for (int c = 0; c < W.cols; ++c) {
      dwr[c] += gr * x[c];
      dx[c] += wr[c] * gr;
    }
  }
}

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, float eps) {
  const size_t n = x.size();
  if (gain.size() != n || bias.size() != n) {
    throw std::invalid_argument("layer_norm: dimension mismatch");
  }
  if (n == 0) throw std::invalid_argument("layer_norm: empty input");
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : x) {
    double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  Vector y(n);
  for (size_t i = 0; i < n; ++i) {
    double xhat = (x[i] - mean) * inv_std;
    y[i] = static_cast<float>(gain[i] * xhat + bias[i]);
  }
  return y;
}

void layer_norm_backward(const Vector& x, const Vector& gain, const Vector& g,
                         Vector& dx, Vector& dgain, Vector& dbias, float eps) {
  const size_t n = x.size();
  if (gain.size() != n || g.size() != n || dgain.size() != n || dbias.size() != n) {
    throw std::invalid_argument("layer_norm_backward: dimension mismatch");
  }
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : x) {
    double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);

  // gg = g * gain; dx = (gg - mean(gg) - xhat * mean(gg * xhat)) / std
  double mean_gg = 0.0;
  double mean_gg_xhat = 0.0;
  std::vector<double> xhat(n);
  for (size_t i = 0; i < n; ++i) {
    xhat[i] = (x[i] - mean) * inv_std;
    double gg = static_cast<double>(g[i]) * gain[i];
    mean_gg += gg;
    mean_gg_xhat += gg * xhat[i];
    dgain[i] += static_cast<float>(g[i] * xhat[i]);
    dbias[i] += g[i];
  }
  mean_gg /= static_cast<double>(n);
  mean_gg_xhat /= static_cast<double>(n);
  dx.assign(n, 0.0f);
  for (size_t i = 0; i < n; ++i) {
    double gg = static_cast<double>(g[i]) * gain[i];
    dx[i] = static_cast<float>((gg - mean_gg - xhat[i] * mean_gg_xhat) * inv_std);
  }
}

Vector softmax(const Vector& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  float max_z = logits[0];
  for (float z : logits) max_z = std::max(max_z, z);
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - max_z);
    sum += e[i];
  }
  Vector y(logits.size());
  const double inv = 1.0 / sum;
  for (size_t i = 0; i < logits.size(); ++i) {
    // Floor at the smallest normal float so entries stay strictly positive
    // even for extreme logit spreads.
    y[i] = std::max(static_cast<float>(e[i] * inv), std::numeric_limits<float>::min());
  }
  return y;
}

void softmax_backward(const Vector& y, const Vector& g, Vector& dlogits) {
  if (y.size() != g.size()) {
    throw std::invalid_argument("softmax_backward: shape mismatch");
  }
  double gy = 0.0;
  for (size_t i = 0; i < y.size(); ++i) gy += static_cast<double>(g[i]) * y[i];
  dlogits.assign(y.size(), 0.0f);
  for (size_t i = 0; i < y.size(); ++i) {
    dlogits[i] = static_cast<float>(y[i] * (g[i] - gy));
  }
}

Vector mean_rows(const Matrix& M) {
  if (M.rows < 1) throw std::invalid_argument("mean_rows: zero rows");
  Vector out(M.cols, 0.0f);
  std::vector<double> acc(M.cols, 0.0);
  for (int r = 0; r < M.rows; ++r) {
    const float* row = M.row(r);
    for (int c = 0; c < M.cols; ++c) acc[c] += row[c];
  }
  for (int c = 0; c < M.cols; ++c) {
    out[c] = static_cast<float>(acc[c] / M.rows);
  }
  return out;
}

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: shape mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

void axpy(float a, const Vector& x, Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: shape mismatch");
  for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace sumn
