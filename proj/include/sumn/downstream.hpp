#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sumn/matrix.hpp"

namespace sumn {

struct ProbeConfig {
  int hidden_dim = 128;
  float learning_rate = 1e-3f;
  int batch_size = 256;
  int max_epochs = 50;
  uint64_t seed = 0;
  float test_fraction = 0.2f;

  void validate() const;
};

struct LabeledEmbedding {
  std::string user_id;
  Vector vec;
  int label = 0;
};

struct ProbeMetrics {
  double accuracy = 0.0;
  double auc = 0.0;  // binary tasks only
  bool has_auc = false;
  int n_train = 0;
  int n_test = 0;
  int n_classes = 0;
};

// Deterministic seeded 80/20 split, then a one-hidden-layer MLP
// (ReLU, softmax output, cross-entropy, Adam). Reports final-epoch metrics
// on the held-out split; binary AUC is read from the positive-class
// probability.
ProbeMetrics train_probe(const std::vector<LabeledEmbedding>& data,
                         const ProbeConfig& config);

// Probability that a random positive outranks a random negative; ties count
// one half. Labels must contain both classes.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct PcaResult {
  Matrix projections;  // n x k
  Matrix components;   // k x d, unit-norm rows
  Vector variances;    // per-component projection variance
};

// Mean-centers columns, then extracts the top-k covariance eigenvectors by
// power iteration with deflation (tolerance 1e-6, at most 1000 iterations).
// Component signs are fixed so the largest-magnitude entry is positive.
PcaResult pca_project(const Matrix& X, int k);

// Embeddings JSONL: {"user_id": "...", "vector": [...]}
std::vector<std::pair<std::string, Vector>> read_embeddings(const std::string& path);
void write_embeddings(const std::vector<std::pair<std::string, Vector>>& rows,
                      const std::string& path);

// Labels CSV: user_id,label
std::unordered_map<std::string, int> read_labels(const std::string& path);

// Inner join on user_id; throws when an embedding has no label, listing the
// first few offenders.
std::vector<LabeledEmbedding> join_embeddings_labels(
    const std::vector<std::pair<std::string, Vector>>& embeddings,
    const std::unordered_map<std::string, int>& labels);

}  // namespace sumn
