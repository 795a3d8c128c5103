#include "sumn/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sumn/adam.hpp"
#include "sumn/ops.hpp"
#include "sumn/trainer.hpp"

namespace sumn {

void ProbeConfig::validate() const {
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (!(learning_rate > 0.0f)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (!(test_fraction > 0.0f && test_fraction < 1.0f)) {
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  }
}

namespace {

struct Mlp {
  Matrix W1;  // hidden x d
  Vector b1;
  Matrix W2;  // classes x hidden
  Vector b2;

  Mlp(int d, int hidden, int classes, Rng& rng) {
    W1 = Matrix(hidden, d);
    b1.assign(hidden, 0.0f);
    W2 = Matrix(classes, hidden);
    b2.assign(classes, 0.0f);
    const float s1 = 1.0f / std::sqrt(static_cast<float>(d));
    const float s2 = 1.0f / std::sqrt(static_cast<float>(hidden));
    for (float& x : W1.data) x = rng.normal() * s1;
    for (float& x : W2.data) x = rng.normal() * s2;
  }

  Vector probabilities(const Vector& x) const {
    Vector h = linear(W1, x);
    for (size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0f, h[i] + b1[i]);
    Vector z = linear(W2, h);
    for (size_t i = 0; i < z.size(); ++i) z[i] += b2[i];
    return softmax(z);
  }
};

struct MlpGrads {
  Matrix W1;
  Vector b1;
  Matrix W2;
  Vector b2;

  explicit MlpGrads(const Mlp& m)
      : W1(m.W1.rows, m.W1.cols),
        b1(m.b1.size(), 0.0f),
        W2(m.W2.rows, m.W2.cols),
        b2(m.b2.size(), 0.0f) {}

  void zero() {
    W1.fill(0.0f);
    std::fill(b1.begin(), b1.end(), 0.0f);
    W2.fill(0.0f);
    std::fill(b2.begin(), b2.end(), 0.0f);
  }
};

// Cross-entropy forward/backward for one sample; accumulates into grads.
double mlp_backward(const Mlp& m, const Vector& x, int label, MlpGrads& grads) {
  Vector h_pre = linear(m.W1, x);
  for (size_t i = 0; i < h_pre.size(); ++i) h_pre[i] += m.b1[i];
  Vector h(h_pre.size());
  for (size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0f, h_pre[i]);
  Vector z = linear(m.W2, h);
  for (size_t i = 0; i < z.size(); ++i) z[i] += m.b2[i];
  Vector p = softmax(z);
  const double loss = -std::log(std::max(static_cast<double>(p[label]), 1e-12));

  Vector dz = p;
  dz[label] -= 1.0f;
  Vector dh(h.size());
  linear_backward(m.W2, h, dz, grads.W2, dh);
  axpy(1.0f, dz, grads.b2);
  Vector dh_pre(h.size());
  for (size_t i = 0; i < h.size(); ++i) dh_pre[i] = h_pre[i] > 0.0f ? dh[i] : 0.0f;
  Vector dx(x.size());
  linear_backward(m.W1, x, dh_pre, grads.W1, dx);
  axpy(1.0f, dh_pre, grads.b1);
  return loss;
}

}  // namespace

ProbeMetrics train_probe(const std::vector<LabeledEmbedding>& data,
                         const ProbeConfig& config) {
  config.validate();
  if (data.size() < 10) throw std::invalid_argument("train_probe: need at least 10 samples");
  std::set<int> classes;
  for (const auto& s : data) {
    if (s.label < 0) throw std::invalid_argument("train_probe: labels must be >= 0");
    classes.insert(s.label);
  }
  const int n_classes = classes.empty() ? 0 : *classes.rbegin() + 1;
  if (classes.size() < 2) throw std::invalid_argument("train_probe: single-class data");
  const int d = static_cast<int>(data[0].vec.size());
  for (const auto& s : data) {
    if (static_cast<int>(s.vec.size()) != d) {
      throw std::invalid_argument("train_probe: inconsistent embedding dimensions");
    }
  }

  auto order = shuffled_indices(data.size(), mix_seed(config.seed, 0x70726f62ULL));
  size_t n_test = std::max<size_t>(
      1, static_cast<size_t>(std::llround(data.size() * config.test_fraction)));
  if (n_test >= data.size()) n_test = data.size() - 1;
  std::vector<size_t> test_idx(order.begin(), order.begin() + n_test);
  std::vector<size_t> train_idx(order.begin() + n_test, order.end());

  Rng rng(mix_seed(config.seed, 0x6d6c70ULL));
  Mlp mlp(d, config.hidden_dim, n_classes, rng);
  MlpGrads grads(mlp);
  AdamState st_w1(mlp.W1.size()), st_b1(mlp.b1.size());
  AdamState st_w2(mlp.W2.size()), st_b2(mlp.b2.size());
  AdamConfig adam_cfg;
  adam_cfg.lr = config.learning_rate;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    auto epoch_order =
        shuffled_indices(train_idx.size(), mix_seed(config.seed, 0x1000 + epoch));
    for (size_t begin = 0; begin < epoch_order.size();
         begin += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(epoch_order.size(), begin + static_cast<size_t>(config.batch_size));
      grads.zero();
      for (size_t i = begin; i < end; ++i) {
        const auto& s = data[train_idx[epoch_order[i]]];
        mlp_backward(mlp, s.vec, s.label, grads);
      }
      const float inv = 1.0f / static_cast<float>(end - begin);
      for (float& g : grads.W1.data) g *= inv;
      for (float& g : grads.b1) g *= inv;
      for (float& g : grads.W2.data) g *= inv;
      for (float& g : grads.b2) g *= inv;
      adam_step(std::span<float>(mlp.W1.data), std::span<const float>(grads.W1.data),
                st_w1, adam_cfg);
      adam_step(std::span<float>(mlp.b1), std::span<const float>(grads.b1), st_b1, adam_cfg);
      adam_step(std::span<float>(mlp.W2.data), std::span<const float>(grads.W2.data),
                st_w2, adam_cfg);
      adam_step(std::span<float>(mlp.b2), std::span<const float>(grads.b2), st_b2, adam_cfg);
    }
  }

  ProbeMetrics metrics;
  metrics.n_train = static_cast<int>(train_idx.size());
  metrics.n_test = static_cast<int>(n_test);
  metrics.n_classes = n_classes;
  std::vector<int> preds, labels;
  std::vector<double> pos_scores;
  for (size_t i : test_idx) {
    Vector p = mlp.probabilities(data[i].vec);
    int argmax = 0;
    for (size_t c = 1; c < p.size(); ++c) {
      if (p[c] > p[argmax]) argmax = static_cast<int>(c);
    }
    preds.push_back(argmax);
    labels.push_back(data[i].label);
    if (n_classes == 2) pos_scores.push_back(p[1]);
  }
  metrics.accuracy = accuracy(preds, labels);
  if (n_classes == 2 && std::set<int>(labels.begin(), labels.end()).size() == 2) {
    metrics.auc = auc(pos_scores, labels);
    metrics.has_auc = true;
  }
  return metrics;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("auc: scores and labels must be non-empty and equal length");
  }
  size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    n_pos += static_cast<size_t>(l);
  }
  const size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: one class absent");

  // Rank statistic with midranks for ties.
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) pos_rank_sum += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  size_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

PcaResult pca_project(const Matrix& X, int k) {
  if (X.rows < 2) throw std::invalid_argument("pca_project: need at least 2 rows");
  if (k < 1 || k > std::min(X.rows, X.cols)) {
    throw std::invalid_argument("pca_project: k out of range");
  }
  const int n = X.rows;
  const int d = X.cols;

  // Column-centered data and sample covariance, in double.
  std::vector<double> mean(d, 0.0);
  for (int r = 0; r < n; ++r) {
    const float* row = X.row(r);
    for (int c = 0; c < d; ++c) mean[c] += row[c];
  }
  for (double& m : mean) m /= n;
  std::vector<double> centered(static_cast<size_t>(n) * d);
  for (int r = 0; r < n; ++r) {
    const float* row = X.row(r);
    for (int c = 0; c < d; ++c) centered[static_cast<size_t>(r) * d + c] = row[c] - mean[c];
  }
  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int r = 0; r < n; ++r) {
    const double* row = centered.data() + static_cast<size_t>(r) * d;
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) cov[static_cast<size_t>(a) * d + b] += row[a] * row[b];
    }
  }
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      const double v = cov[static_cast<size_t>(a) * d + b] / (n - 1);
      cov[static_cast<size_t>(a) * d + b] = v;
      cov[static_cast<size_t>(b) * d + a] = v;
    }
  }
  double total_var = 0.0;
  for (int a = 0; a < d; ++a) total_var += cov[static_cast<size_t>(a) * d + a];
  if (!(total_var > 0.0)) throw std::invalid_argument("pca_project: zero total variance");

  PcaResult result;
  result.components = Matrix(k, d);
  result.variances.assign(k, 0.0f);
  std::vector<std::vector<double>> found;
  Rng rng(0x70636131ULL);
  for (int comp = 0; comp < k; ++comp) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    double eigenvalue = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
      // Orthogonalize against found components, then normalize.
      for (const auto& f : found) {
        double proj = 0.0;
        for (int c = 0; c < d; ++c) proj += v[c] * f[c];
        for (int c = 0; c < d; ++c) v[c] -= proj * f[c];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) {
        for (double& x : v) x = rng.normal();
        continue;
      }
      for (double& x : v) x /= norm;

      std::vector<double> next(d, 0.0);
      for (int a = 0; a < d; ++a) {
        const double* cr = cov.data() + static_cast<size_t>(a) * d;
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += cr[c] * v[c];
        next[a] = acc;
      }
      eigenvalue = 0.0;
      for (int c = 0; c < d; ++c) eigenvalue += v[c] * next[c];
      double diff = 0.0;
      double next_norm = 0.0;
      for (double x : next) next_norm += x * x;
      next_norm = std::sqrt(next_norm);
      if (next_norm < 1e-300) break;  // deflated to (near) zero: arbitrary direction
      for (int c = 0; c < d; ++c) {
        const double nx = next[c] / next_norm;
        diff += std::abs(nx - v[c]);
        v[c] = nx;
      }
      if (diff < 1e-6) break;
    }
    // Rayleigh quotient at the final iterate.
    {
      double acc_ev = 0.0;
      for (int a = 0; a < d; ++a) {
        const double* cr = cov.data() + static_cast<size_t>(a) * d;
        double acc = 0.0;
        for (int c = 0; c < d; ++c) acc += cr[c] * v[c];
        acc_ev += v[a] * acc;
      }
      eigenvalue = acc_ev;
    }
    // Sign fix: largest-magnitude entry positive.
    int big = 0;
    for (int c = 1; c < d; ++c) {
      if (std::abs(v[c]) > std::abs(v[big])) big = c;
    }
    if (v[big] < 0.0) {
      for (double& x : v) x = -x;
    }
    for (int c = 0; c < d; ++c) result.components.at(comp, c) = static_cast<float>(v[c]);
    result.variances[comp] = static_cast<float>(std::max(0.0, eigenvalue));
    // Deflate.
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        cov[static_cast<size_t>(a) * d + b] -= eigenvalue * v[a] * v[b];
      }
    }
    found.push_back(std::move(v));
  }

  result.projections = Matrix(n, k);
  for (int r = 0; r < n; ++r) {
    const double* row = centered.data() + static_cast<size_t>(r) * d;
    for (int comp = 0; comp < k; ++comp) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c) acc += row[c] * result.components.at(comp, c);
      result.projections.at(r, comp) = static_cast<float>(acc);
    }
  }
  return result;
}

std::vector<std::pair<std::string, Vector>> read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file: " + path);
  std::vector<std::pair<std::string, Vector>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      Vector vec;
      for (const auto& x : j.at("vector")) vec.push_back(x.get<float>());
      rows.emplace_back(j.at("user_id").get<std::string>(), std::move(vec));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_embeddings(const std::vector<std::pair<std::string, Vector>>& rows,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open embeddings file for writing: " + path);
  for (const auto& [user_id, vec] : rows) {
    nlohmann::json j{{"user_id", user_id}, {"vector", vec}};
    out << j.dump() << "\n";
  }
}

std::unordered_map<std::string, int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labels file: " + path);
  std::unordered_map<std::string, int> labels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("user_id,", 0) == 0) continue;  // optional header
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected user_id,label");
    }
    labels[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
  }
  return labels;
}

std::vector<LabeledEmbedding> join_embeddings_labels(
    const std::vector<std::pair<std::string, Vector>>& embeddings,
    const std::unordered_map<std::string, int>& labels) {
  std::vector<LabeledEmbedding> out;
  std::vector<std::string> missing;
  for (const auto& [user_id, vec] : embeddings) {
    auto it = labels.find(user_id);
    if (it == labels.end()) {
      if (missing.size() < 5) missing.push_back(user_id);
      continue;
    }
    out.push_back(LabeledEmbedding{user_id, vec, it->second});
  }
  if (!missing.empty()) {
    std::string msg = "embeddings without labels:";
    for (const auto& id : missing) msg += " " + id;
    throw std::runtime_error(msg);
  }
  return out;
}

}  // namespace sumn
