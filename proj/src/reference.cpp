#include "sumn/reference.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sumn {

namespace {

using DVec = std::vector<double>;

DVec matvec(const Matrix& W, const DVec& x) {
  DVec y(W.rows, 0.0);
  for (int r = 0; r < W.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < W.cols; ++c) acc += static_cast<double>(W.at(r, c)) * x[c];
    y[r] = acc;
  }
  return y;
}

DVec lnorm(const DVec& x, const Vector& gain, const Vector& bias) {
  const size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + 1e-5);
  DVec y(n);
  for (size_t i = 0; i < n; ++i) {
    y[i] = static_cast<double>(gain[i]) * (x[i] - mean) * inv + bias[i];
  }
  return y;
}

DVec smax(const DVec& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  DVec y(z.size());
  double sum = 0.0;
  for (size_t i = 0; i < z.size(); ++i) {
    y[i] = std::exp(z[i] - m);
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

}  // namespace

double reference_loss(const TrainingSample& sample, const ModelParams& p,
                      Variant variant) {
  const int d = p.d;
  const int V = p.vocab_size();
  const size_t n = sample.history.size();
  if (n == 0) throw std::invalid_argument("reference_loss: empty history");

  std::vector<DVec> E(n, DVec(d, 0.0));
  for (size_t t = 0; t < n; ++t) {
    const auto& ids = sample.history[t];
    if (ids.empty()) throw std::invalid_argument("reference_loss: empty behavior");
    for (int id : ids) {
      for (int c = 0; c < d; ++c) E[t][c] += p.embeddings.at(id, c);
    }
    for (int c = 0; c < d; ++c) E[t][c] /= static_cast<double>(ids.size());
  }

  std::vector<DVec> vals(n);
  for (size_t t = 0; t < n; ++t) vals[t] = lnorm(matvec(p.Wv, E[t]), p.lnv_gain, p.lnv_bias);

  std::vector<DVec> users;
  if (variant == Variant::MEAN || variant == Variant::MAX) {
    DVec pooled(d, 0.0);
    if (variant == Variant::MEAN) {
      for (size_t t = 0; t < n; ++t) {
        for (int c = 0; c < d; ++c) pooled[c] += vals[t][c] / static_cast<double>(n);
      }
    } else {
      pooled = vals[0];
      for (size_t t = 1; t < n; ++t) {
        for (int c = 0; c < d; ++c) pooled[c] = std::max(pooled[c], vals[t][c]);
      }
    }
    users.push_back(lnorm(pooled, p.lnu_gain, p.lnu_bias));
  } else {
    std::vector<DVec> keys(n);
    for (size_t t = 0; t < n; ++t) {
      keys[t] = lnorm(matvec(p.Wk, E[t]), p.lnk_gain, p.lnk_bias);
    }
    DVec m(d), u(d);
    for (int c = 0; c < d; ++c) m[c] = u[c] = p.m0[c];
    for (int h = 0; h < p.hops; ++h) {
      DVec logits(n, 0.0);
      for (size_t t = 0; t < n; ++t) {
        for (int c = 0; c < d; ++c) logits[t] += keys[t][c] * u[c];
      }
      DVec alpha = smax(logits);
      for (size_t t = 0; t < n; ++t) {
        for (int c = 0; c < d; ++c) m[c] += alpha[t] * vals[t][c];
      }
      u = lnorm(m, p.lnu_gain, p.lnu_bias);
      users.push_back(u);
    }
  }

  // Target distribution and per-representation cross-entropy.
  double denom = 0.0;
  for (const auto& [id, c] : sample.target_counts) {
    denom += std::log1p(static_cast<double>(c));
  }
  if (denom <= 0.0) throw std::invalid_argument("reference_loss: empty target counts");

  double total = 0.0;
  for (const auto& u : users) {
    DVec z = matvec(p.Wo, u);
    for (double& v : z) v = v > 0.0 ? v : 0.0;
    DVec logits = matvec(p.O, z);
    DVec phat = smax(logits);
    double loss = 0.0;
    for (const auto& [id, c] : sample.target_counts) {
      const double pw = std::log1p(static_cast<double>(c)) / denom;
      loss -= pw * std::log(std::max(phat[id], 1e-12));
    }
    total += loss;
  }
  return total / static_cast<double>(users.size());
}

}  // namespace sumn
