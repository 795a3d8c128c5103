#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sumn/corpus.hpp"
#include "sumn/matrix.hpp"

namespace sumn {

// SUMN is the full model; AE only changes how samples are built (target set
// equals history set); MEAN and MAX swap the multi-hop aggregation for a
// single pooling pass over the value embeddings.
enum class Variant { SUMN, AE, MEAN, MAX };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

// All trainable tensors. Field order is the checkpoint serialization order.
struct ModelParams {
  Matrix embeddings;  // |V| x d word vectors
  Matrix Wk;          // d x d key projection
  Matrix Wv;          // d x d value projection
  Vector lnk_gain, lnk_bias;
  Vector lnv_gain, lnv_bias;
  Vector lnu_gain, lnu_bias;
  Vector m0;  // trainable initial memory
  Matrix Wo;  // d x d head projection
  Matrix O;   // |V| x d output matrix
  int d = 0;
  int hops = 0;

  int vocab_size() const { return embeddings.rows; }
  size_t param_count() const;

  static ModelParams init(int vocab_size, int d, int hops, Rng& rng);
  static ModelParams zeros_like(const ModelParams& other);

  // Named flat views over every tensor, in serialization order.
  std::vector<std::pair<std::string, std::span<float>>> tensors();
  std::vector<std::pair<std::string, std::span<const float>>> tensors() const;

  void zero();
  void scale(float a);
  void add(const ModelParams& other);
};

// Per-hop attention weights, memories and user vectors. MEAN/MAX produce a
// single user vector and no attention rows.
struct HopTrace {
  Matrix alphas;                 // N x |S|
  std::vector<Vector> memories;  // m^(1..N)
  std::vector<Vector> users;     // u^(1..N)
};

struct LossBreakdown {
  std::vector<double> per_hop;
  double total = 0.0;
};

// Row t is the mean of the embedding rows for behavior t's word ids.
Matrix embed_behaviors(const std::vector<std::vector<int>>& history,
                       const ModelParams& params);

// Multi-hop attention aggregation over behavior embeddings E (|S| x d).
HopTrace aggregate(const Matrix& E, const ModelParams& params);

// Variant dispatch: SUMN/AE run the multi-hop layer, MEAN/MAX pool the value
// embeddings into one representation.
HopTrace aggregate_variant(const Matrix& E, const ModelParams& params, Variant variant);

// softmax over V of O * ReLU(Wo * u).
Vector predict_distribution(const Vector& u, const ModelParams& params);

// p(w) = ln(1 + count(w)) / sum_w' ln(1 + count(w')).
Vector target_distribution(const std::map<int, int>& counts, int vocab_size);

// Cross-entropy form of the KL objective: -sum_{p(w)>0} p(w) ln p_hat(w),
// with p_hat floored at 1e-12 before the log.
double consistency_loss(const Vector& p, const Vector& p_hat);

// Deep-supervised loss: p_hat^(h) from every hop's user vector, total is the
// mean of the per-hop losses.
LossBreakdown forward_loss(const TrainingSample& sample, const ModelParams& params,
                           Variant variant = Variant::SUMN);

// Same forward pass plus hand-derived gradients accumulated into grads.
LossBreakdown forward_backward(const TrainingSample& sample, const ModelParams& params,
                               ModelParams& grads, Variant variant = Variant::SUMN);

// Final user representation u^(N) (the single pooled vector for MEAN/MAX).
Vector infer(const std::vector<std::vector<int>>& history, const ModelParams& params,
             Variant variant = Variant::SUMN);

}  // namespace sumn
