#include "sumn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "sumn/ops.hpp"

namespace sumn {

namespace {

constexpr double kLogFloor = 1e-12;

float relu(float x) { return x > 0.0f ? x : 0.0f; }

// Keys and values are hop-independent (Wk/Wv shared across hops), so they are
// computed once per sample.
struct KeyValue {
  std::vector<Vector> key_pre, keys;
  std::vector<Vector> val_pre, vals;
};

KeyValue project_keys_values(const Matrix& E, const ModelParams& p, bool need_keys) {
  KeyValue kv;
  const int n = E.rows;
  kv.val_pre.reserve(n);
  kv.vals.reserve(n);
  if (need_keys) {
    kv.key_pre.reserve(n);
    kv.keys.reserve(n);
  }
  for (int t = 0; t < n; ++t) {
    Vector e(E.row(t), E.row(t) + E.cols);
    if (need_keys) {
      Vector kp = linear(p.Wk, e);
      kv.keys.push_back(layer_norm(kp, p.lnk_gain, p.lnk_bias));
      kv.key_pre.push_back(std::move(kp));
    }
    Vector vp = linear(p.Wv, e);
    kv.vals.push_back(layer_norm(vp, p.lnv_gain, p.lnv_bias));
    kv.val_pre.push_back(std::move(vp));
  }
  return kv;
}

// Full forward state kept for the backward pass.
struct ForwardTrace {
  Matrix E;
  KeyValue kv;
  HopTrace hops;
  std::vector<Vector> head_z;     // Wo * u per hop
  std::vector<Vector> head_f;     // ReLU(head_z)
  std::vector<Vector> head_phat;  // predicted distribution per hop
  Vector pooled;                  // MEAN/MAX pre-LN pooled vector
  std::vector<int> max_arg;       // MAX argmax row per coordinate
};

void run_head(const Vector& u, const ModelParams& p, ForwardTrace& tr) {
  Vector z = linear(p.Wo, u);
  Vector f(z.size());
  for (size_t i = 0; i < z.size(); ++i) f[i] = relu(z[i]);
  Vector logits = linear(p.O, f);
  tr.head_phat.push_back(softmax(logits));
  tr.head_z.push_back(std::move(z));
  tr.head_f.push_back(std::move(f));
}

ForwardTrace run_forward(const TrainingSample& sample, const ModelParams& p,
                         Variant variant) {
  ForwardTrace tr;
  tr.E = embed_behaviors(sample.history, p);
  const int n = tr.E.rows;

  if (variant == Variant::MEAN || variant == Variant::MAX) {
    tr.kv = project_keys_values(tr.E, p, /*need_keys=*/false);
    if (variant == Variant::MEAN) {
      tr.pooled.assign(p.d, 0.0f);
      for (int t = 0; t < n; ++t) axpy(1.0f / n, tr.kv.vals[t], tr.pooled);
    } else {
      tr.pooled = tr.kv.vals[0];
      tr.max_arg.assign(p.d, 0);
      for (int t = 1; t < n; ++t) {
        for (int c = 0; c < p.d; ++c) {
          if (tr.kv.vals[t][c] > tr.pooled[c]) {
            tr.pooled[c] = tr.kv.vals[t][c];
            tr.max_arg[c] = t;
          }
        }
      }
    }
    tr.hops.users.push_back(layer_norm(tr.pooled, p.lnu_gain, p.lnu_bias));
    tr.hops.memories.push_back(tr.pooled);
    run_head(tr.hops.users.back(), p, tr);
    return tr;
  }

  tr.kv = project_keys_values(tr.E, p, /*need_keys=*/true);
  tr.hops.alphas = Matrix(p.hops, n);
  Vector m = p.m0;
  Vector u = p.m0;  // u^(0) = m^(0)
  for (int h = 0; h < p.hops; ++h) {
    Vector logits(n);
    for (int t = 0; t < n; ++t) {
      logits[t] = static_cast<float>(dot(tr.kv.keys[t], u));
    }
    Vector alpha = softmax(logits);
    for (int t = 0; t < n; ++t) tr.hops.alphas.at(h, t) = alpha[t];
    for (int t = 0; t < n; ++t) axpy(alpha[t], tr.kv.vals[t], m);
    u = layer_norm(m, p.lnu_gain, p.lnu_bias);
    tr.hops.memories.push_back(m);
    tr.hops.users.push_back(u);
    run_head(u, p, tr);
  }
  return tr;
}

LossBreakdown trace_loss(const ForwardTrace& tr, const TrainingSample& sample,
                         int vocab_size) {
  Vector p = target_distribution(sample.target_counts, vocab_size);
  LossBreakdown out;
  double total = 0.0;
  for (const auto& phat : tr.head_phat) {
    double l = consistency_loss(p, phat);
    out.per_hop.push_back(l);
    total += l;
  }
  out.total = total / static_cast<double>(out.per_hop.size());
  return out;
}

}  // namespace

Variant parse_variant(const std::string& name) {
  if (name == "SUMN") return Variant::SUMN;
  if (name == "AE") return Variant::AE;
  if (name == "MEAN") return Variant::MEAN;
  if (name == "MAX") return Variant::MAX;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::SUMN: return "SUMN";
    case Variant::AE: return "AE";
    case Variant::MEAN: return "MEAN";
    case Variant::MAX: return "MAX";
  }
  throw std::invalid_argument("unknown variant");
}

size_t ModelParams::param_count() const {
  size_t n = 0;
  for (const auto& [name, span] : tensors()) n += span.size();
  return n;
}

ModelParams ModelParams::init(int vocab_size, int d, int hops, Rng& rng) {
  if (vocab_size < 1 || d < 1 || hops < 1) {
    throw std::invalid_argument("ModelParams::init: vocab_size, d, hops must be >= 1");
  }
  ModelParams p;
  p.d = d;
  p.hops = hops;
  p.embeddings = Matrix(vocab_size, d);
  p.Wk = Matrix(d, d);
  p.Wv = Matrix(d, d);
  p.lnk_gain.assign(d, 1.0f);
  p.lnk_bias.assign(d, 0.0f);
  p.lnv_gain.assign(d, 1.0f);
  p.lnv_bias.assign(d, 0.0f);
  p.lnu_gain.assign(d, 1.0f);
  p.lnu_bias.assign(d, 0.0f);
  p.m0.assign(d, 0.0f);
  p.Wo = Matrix(d, d);
  p.O = Matrix(vocab_size, d);

  const float proj_std = 1.0f / std::sqrt(static_cast<float>(d));
  for (float& x : p.embeddings.data) x = rng.uniform(-0.05f, 0.05f);
  for (float& x : p.Wk.data) x = rng.normal() * proj_std;
  for (float& x : p.Wv.data) x = rng.normal() * proj_std;
  for (float& x : p.m0) x = rng.normal() * proj_std;
  for (float& x : p.Wo.data) x = rng.normal() * proj_std;
  for (float& x : p.O.data) x = rng.uniform(-0.05f, 0.05f);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.d = other.d;
  p.hops = other.hops;
  p.embeddings = Matrix(other.embeddings.rows, other.embeddings.cols);
  p.Wk = Matrix(other.Wk.rows, other.Wk.cols);
  p.Wv = Matrix(other.Wv.rows, other.Wv.cols);
  p.lnk_gain.assign(other.lnk_gain.size(), 0.0f);
  p.lnk_bias.assign(other.lnk_bias.size(), 0.0f);
  p.lnv_gain.assign(other.lnv_gain.size(), 0.0f);
  p.lnv_bias.assign(other.lnv_bias.size(), 0.0f);
  p.lnu_gain.assign(other.lnu_gain.size(), 0.0f);
  p.lnu_bias.assign(other.lnu_bias.size(), 0.0f);
  p.m0.assign(other.m0.size(), 0.0f);
  p.Wo = Matrix(other.Wo.rows, other.Wo.cols);
  p.O = Matrix(other.O.rows, other.O.cols);
  return p;
}

std::vector<std::pair<std::string, std::span<float>>> ModelParams::tensors() {
  return {
      {"embeddings", std::span<float>(embeddings.data)},
      {"Wk", std::span<float>(Wk.data)},
      {"Wv", std::span<float>(Wv.data)},
      {"lnk_gain", std::span<float>(lnk_gain)},
      {"lnk_bias", std::span<float>(lnk_bias)},
      {"lnv_gain", std::span<float>(lnv_gain)},
      {"lnv_bias", std::span<float>(lnv_bias)},
      {"lnu_gain", std::span<float>(lnu_gain)},
      {"lnu_bias", std::span<float>(lnu_bias)},
      {"m0", std::span<float>(m0)},
      {"Wo", std::span<float>(Wo.data)},
      {"O", std::span<float>(O.data)},
  };
}

std::vector<std::pair<std::string, std::span<const float>>> ModelParams::tensors() const {
  return {
      {"embeddings", std::span<const float>(embeddings.data)},
      {"Wk", std::span<const float>(Wk.data)},
      {"Wv", std::span<const float>(Wv.data)},
      {"lnk_gain", std::span<const float>(lnk_gain)},
      {"lnk_bias", std::span<const float>(lnk_bias)},
      {"lnv_gain", std::span<const float>(lnv_gain)},
      {"lnv_bias", std::span<const float>(lnv_bias)},
      {"lnu_gain", std::span<const float>(lnu_gain)},
      {"lnu_bias", std::span<const float>(lnu_bias)},
      {"m0", std::span<const float>(m0)},
      {"Wo", std::span<const float>(Wo.data)},
      {"O", std::span<const float>(O.data)},
  };
}

void ModelParams::zero() {
  for (auto& [name, span] : tensors()) std::fill(span.begin(), span.end(), 0.0f);
}

void ModelParams::scale(float a) {
  for (auto& [name, span] : tensors()) {
    for (float& x : span) x *= a;
  }
}

void ModelParams::add(const ModelParams& other) {
  auto mine = tensors();
  auto theirs = other.tensors();
  for (size_t i = 0; i < mine.size(); ++i) {
    auto& dst = mine[i].second;
    const auto& src = theirs[i].second;
    if (dst.size() != src.size()) throw std::invalid_argument("ModelParams::add: shape mismatch");
    for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

Matrix embed_behaviors(const std::vector<std::vector<int>>& history,
                       const ModelParams& params) {
  if (history.empty()) throw std::invalid_argument("embed_behaviors: empty history");
  Matrix E(static_cast<int>(history.size()), params.d);
  std::vector<double> acc(params.d);
  for (size_t t = 0; t < history.size(); ++t) {
    const auto& ids = history[t];
    if (ids.empty()) throw std::invalid_argument("embed_behaviors: empty behavior");
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int id : ids) {
      if (id < 0 || id >= params.vocab_size()) {
        throw std::invalid_argument("embed_behaviors: word id out of range");
      }
      const float* w = params.embeddings.row(id);
      for (int c = 0; c < params.d; ++c) acc[c] += w[c];
    }
    float* row = E.row(static_cast<int>(t));
    for (int c = 0; c < params.d; ++c) {
      row[c] = static_cast<float>(acc[c] / static_cast<double>(ids.size()));
    }
  }
  return E;
}

HopTrace aggregate(const Matrix& E, const ModelParams& params) {
  if (E.rows < 1) throw std::invalid_argument("aggregate: need at least one behavior");
  KeyValue kv = project_keys_values(E, params, /*need_keys=*/true);
  HopTrace trace;
  trace.alphas = Matrix(params.hops, E.rows);
  Vector m = params.m0;
  Vector u = params.m0;
  for (int h = 0; h < params.hops; ++h) {
    Vector logits(E.rows);
    for (int t = 0; t < E.rows; ++t) {
      logits[t] = static_cast<float>(dot(kv.keys[t], u));
    }
    Vector alpha = softmax(logits);
    for (int t = 0; t < E.rows; ++t) trace.alphas.at(h, t) = alpha[t];
    for (int t = 0; t < E.rows; ++t) axpy(alpha[t], kv.vals[t], m);
    u = layer_norm(m, params.lnu_gain, params.lnu_bias);
    trace.memories.push_back(m);
    trace.users.push_back(u);
  }
  return trace;
}

HopTrace aggregate_variant(const Matrix& E, const ModelParams& params, Variant variant) {
  if (variant == Variant::SUMN || variant == Variant::AE) return aggregate(E, params);
  if (E.rows < 1) throw std::invalid_argument("aggregate_variant: need at least one behavior");
  KeyValue kv = project_keys_values(E, params, /*need_keys=*/false);
  Vector pooled;
  if (variant == Variant::MEAN) {
    pooled.assign(params.d, 0.0f);
    for (int t = 0; t < E.rows; ++t) axpy(1.0f / E.rows, kv.vals[t], pooled);
  } else {
    pooled = kv.vals[0];
    for (int t = 1; t < E.rows; ++t) {
      for (int c = 0; c < params.d; ++c) {
        pooled[c] = std::max(pooled[c], kv.vals[t][c]);
      }
    }
  }
  HopTrace trace;
  trace.memories.push_back(pooled);
  trace.users.push_back(layer_norm(pooled, params.lnu_gain, params.lnu_bias));
  return trace;
}

Vector predict_distribution(const Vector& u, const ModelParams& params) {
  if (static_cast<int>(u.size()) != params.d) {
    throw std::invalid_argument("predict_distribution: u has wrong length");
  }
  Vector z = linear(params.Wo, u);
  for (float& x : z) x = relu(x);
  return softmax(linear(params.O, z));
}

Vector target_distribution(const std::map<int, int>& counts, int vocab_size) {
  if (counts.empty()) throw std::invalid_argument("target_distribution: empty counts");
  double denom = 0.0;
  for (const auto& [id, c] : counts) {
    if (id < 0 || id >= vocab_size) {
      throw std::invalid_argument("target_distribution: word id out of range");
    }
    if (c < 1) throw std::invalid_argument("target_distribution: counts must be >= 1");
    denom += std::log1p(static_cast<double>(c));
  }
  Vector p(vocab_size, 0.0f);
  for (const auto& [id, c] : counts) {
    p[id] = static_cast<float>(std::log1p(static_cast<double>(c)) / denom);
  }
  return p;
}

double consistency_loss(const Vector& p, const Vector& p_hat) {
  if (p.size() != p_hat.size()) {
    throw std::invalid_argument("consistency_loss: length mismatch");
  }
  double loss = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0f) {
      loss -= static_cast<double>(p[i]) *
              std::log(std::max(static_cast<double>(p_hat[i]), kLogFloor));
    }
  }
  return loss;
}

LossBreakdown forward_loss(const TrainingSample& sample, const ModelParams& params,
                           Variant variant) {
  ForwardTrace tr = run_forward(sample, params, variant);
  return trace_loss(tr, sample, params.vocab_size());
}

LossBreakdown forward_backward(const TrainingSample& sample, const ModelParams& params,
                               ModelParams& grads, Variant variant) {
  ForwardTrace tr = run_forward(sample, params, variant);
  LossBreakdown loss = trace_loss(tr, sample, params.vocab_size());

  const int n = tr.E.rows;
  const int d = params.d;
  const int V = params.vocab_size();
  const int n_heads = static_cast<int>(tr.head_phat.size());
  const float head_scale = 1.0f / static_cast<float>(n_heads);
  Vector p = target_distribution(sample.target_counts, V);

  // Head backward per supervised representation; du_user collects gradients
  // flowing into each u^(h) (index 0 is u^(0) = m^(0)).
  const bool multihop = (variant == Variant::SUMN || variant == Variant::AE);
  std::vector<Vector> du_user(multihop ? n_heads + 1 : n_heads, Vector(d, 0.0f));
  Vector dq(V), df(d), dz(d), dx(d);
  for (int h = 0; h < n_heads; ++h) {
    const Vector& u = tr.hops.users[h];
    for (int w = 0; w < V; ++w) dq[w] = head_scale * (tr.head_phat[h][w] - p[w]);
    linear_backward(params.O, tr.head_f[h], dq, grads.O, df);
    for (int c = 0; c < d; ++c) dz[c] = tr.head_z[h][c] > 0.0f ? df[c] : 0.0f;
    linear_backward(params.Wo, u, dz, grads.Wo, dx);
    axpy(1.0f, dx, du_user[multihop ? h + 1 : h]);
  }

  std::vector<Vector> dvals(n, Vector(d, 0.0f));
  if (multihop) {
    std::vector<Vector> dkeys(n, Vector(d, 0.0f));
    Vector dm_carry(d, 0.0f);
    Vector dm(d), dalpha(n), dlogits(n);
    for (int h = params.hops; h >= 1; --h) {
      // u^(h) = LN(m^(h))
      layer_norm_backward(tr.hops.memories[h - 1], params.lnu_gain, du_user[h], dm,
                          grads.lnu_gain, grads.lnu_bias);
      axpy(1.0f, dm_carry, dm);
      // m^(h) = m^(h-1) + sum_t alpha_t v_t
      const Vector& u_prev = (h > 1) ? tr.hops.users[h - 2] : params.m0;
      for (int t = 0; t < n; ++t) {
        dalpha[t] = static_cast<float>(dot(dm, tr.kv.vals[t]));
        axpy(tr.hops.alphas.at(h - 1, t), dm, dvals[t]);
      }
      Vector alpha(tr.hops.alphas.row(h - 1), tr.hops.alphas.row(h - 1) + n);
      softmax_backward(alpha, dalpha, dlogits);
      // logits_t = k_t . u^(h-1)
      for (int t = 0; t < n; ++t) {
        axpy(dlogits[t], u_prev, dkeys[t]);
        axpy(dlogits[t], tr.kv.keys[t], du_user[h - 1]);
      }
      dm_carry = dm;
    }
    // m^(0) feeds m^(1) additively and hop-1 logits through u^(0).
    axpy(1.0f, dm_carry, grads.m0);
    axpy(1.0f, du_user[0], grads.m0);

    Vector dpre(d), de_contrib(d);
    std::vector<Vector> de(n, Vector(d, 0.0f));
    for (int t = 0; t < n; ++t) {
      layer_norm_backward(tr.kv.key_pre[t], params.lnk_gain, dkeys[t], dpre,
                          grads.lnk_gain, grads.lnk_bias);
      Vector e(tr.E.row(t), tr.E.row(t) + d);
      linear_backward(params.Wk, e, dpre, grads.Wk, de_contrib);
      axpy(1.0f, de_contrib, de[t]);

      layer_norm_backward(tr.kv.val_pre[t], params.lnv_gain, dvals[t], dpre,
                          grads.lnv_gain, grads.lnv_bias);
      linear_backward(params.Wv, e, dpre, grads.Wv, de_contrib);
      axpy(1.0f, de_contrib, de[t]);
    }
    for (int t = 0; t < n; ++t) {
      const auto& ids = sample.history[t];
      const float inv = 1.0f / static_cast<float>(ids.size());
      for (int id : ids) {
        float* row = grads.embeddings.row(id);
        for (int c = 0; c < d; ++c) row[c] += de[t][c] * inv;
      }
    }
    return loss;
  }

  // MEAN/MAX: single pooled representation, no attention, no m^(0).
  Vector dpooled(d);
  layer_norm_backward(tr.pooled, params.lnu_gain, du_user[0], dpooled, grads.lnu_gain,
                      grads.lnu_bias);
  if (variant == Variant::MEAN) {
    for (int t = 0; t < n; ++t) axpy(1.0f / n, dpooled, dvals[t]);
  } else {
    for (int c = 0; c < d; ++c) dvals[tr.max_arg[c]][c] += dpooled[c];
  }
  Vector dvpre(d), de_contrib(d);
  for (int t = 0; t < n; ++t) {
    layer_norm_backward(tr.kv.val_pre[t], params.lnv_gain, dvals[t], dvpre,
                        grads.lnv_gain, grads.lnv_bias);
    Vector e(tr.E.row(t), tr.E.row(t) + d);
    linear_backward(params.Wv, e, dvpre, grads.Wv, de_contrib);
    const auto& ids = sample.history[t];
    const float inv = 1.0f / static_cast<float>(ids.size());
    for (int id : ids) {
      float* row = grads.embeddings.row(id);
      for (int c = 0; c < d; ++c) row[c] += de_contrib[c] * inv;
    }
  }
  return loss;
}

Vector infer(const std::vector<std::vector<int>>& history, const ModelParams& params,
             Variant variant) {
  if (history.empty()) throw std::invalid_argument("infer: empty history");
  Matrix E = embed_behaviors(history, params);
  HopTrace trace = aggregate_variant(E, params, variant);
  return trace.users.back();
}

}  // namespace sumn
