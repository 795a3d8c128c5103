#include "sumn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <zlib.h>

#include "sumn/checkpoint.hpp"

namespace sumn {

namespace {

constexpr uint64_t kValSplitStream = 0x76616c73ULL;   // validation split
constexpr uint64_t kEpochStreamBase = 0x65706f63ULL;  // per-epoch shuffle
constexpr char kStateMagic[6] = {'S', 'U', 'M', 'N', 'S', '1'};

struct OptimizerState {
  std::vector<AdamState> per_tensor;

  explicit OptimizerState(const ModelParams& params) {
    for (const auto& [name, span] : params.tensors()) {
      per_tensor.emplace_back(span.size());
    }
  }
};

std::string tensor_norms(const ModelParams& params) {
  std::ostringstream out;
  for (const auto& [name, span] : params.tensors()) {
    double s = 0.0;
    for (float x : span) s += static_cast<double>(x) * x;
    out << " " << name << "=" << std::sqrt(s);
  }
  return out.str();
}

// Double-precision gradient accumulator mirroring the ModelParams layout.
struct GradAccum {
  std::vector<std::vector<double>> buf;

  explicit GradAccum(const ModelParams& shape) {
    for (const auto& [name, span] : shape.tensors()) buf.emplace_back(span.size(), 0.0);
  }

  void add(const ModelParams& g) {
    auto tensors = g.tensors();
    for (size_t i = 0; i < tensors.size(); ++i) {
      const auto& src = tensors[i].second;
      for (size_t j = 0; j < src.size(); ++j) buf[i][j] += src[j];
    }
  }

  void add(const GradAccum& other) {
    for (size_t i = 0; i < buf.size(); ++i) {
      for (size_t j = 0; j < buf[i].size(); ++j) buf[i][j] += other.buf[i][j];
    }
  }

  void write_mean(ModelParams& out, double count) const {
    auto tensors = out.tensors();
    for (size_t i = 0; i < tensors.size(); ++i) {
      auto& dst = tensors[i].second;
      for (size_t j = 0; j < dst.size(); ++j) {
        dst[j] = static_cast<float>(buf[i][j] / count);
      }
    }
  }
};

void clip_gradient(ModelParams& grads, float max_norm) {
  if (max_norm <= 0.0f) return;
  double total = 0.0;
  for (const auto& [name, span] : grads.tensors()) {
    for (float x : span) total += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm) grads.scale(static_cast<float>(max_norm / norm));
}

struct TrainState {
  ModelParams params;
  OptimizerState opt;
  int next_epoch = 0;
  double best_val = 0.0;
  int best_epoch = -1;
  int since_improve = 0;
  std::vector<double> train_curve;
  std::vector<double> val_curve;

  TrainState(ModelParams p, OptimizerState o) : params(std::move(p)), opt(std::move(o)) {}
};

void append_raw(std::string& buf, const void* data, size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

template <typename T>
void append_pod(std::string& buf, T v) {
  append_raw(buf, &v, sizeof(T));
}

template <typename T>
T read_pod(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("train state truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void save_state(const std::string& path, const TrainState& st) {
  std::string buf;
  buf.append(kStateMagic, sizeof(kStateMagic));
  append_pod<uint32_t>(buf, static_cast<uint32_t>(st.params.d));
  append_pod<uint32_t>(buf, static_cast<uint32_t>(st.params.hops));
  append_pod<uint32_t>(buf, static_cast<uint32_t>(st.params.vocab_size()));
  for (const auto& [name, span] : st.params.tensors()) {
    append_raw(buf, span.data(), span.size() * sizeof(float));
  }
  for (const auto& adam : st.opt.per_tensor) {
    append_pod<int64_t>(buf, adam.t);
    append_raw(buf, adam.m.data(), adam.m.size() * sizeof(float));
    append_raw(buf, adam.v.data(), adam.v.size() * sizeof(float));
  }
  append_pod<int32_t>(buf, st.next_epoch);
  append_pod<double>(buf, st.best_val);
  append_pod<int32_t>(buf, st.best_epoch);
  append_pod<int32_t>(buf, st.since_improve);
  append_pod<uint32_t>(buf, static_cast<uint32_t>(st.train_curve.size()));
  for (double v : st.train_curve) append_pod<double>(buf, v);
  for (double v : st.val_curve) append_pod<double>(buf, v);
  append_pod<uint32_t>(buf, static_cast<uint32_t>(
                                crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
                                      static_cast<uInt>(buf.size()))));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write train state: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void load_state(const std::string& path, TrainState& st) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open train state: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string buf = ss.str();
  if (buf.size() < sizeof(kStateMagic) + 4) throw std::runtime_error("train state truncated");

  std::string body = buf.substr(0, buf.size() - 4);
  size_t pos = body.size();
  if (read_pod<uint32_t>(buf, pos) !=
      static_cast<uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                                  static_cast<uInt>(body.size())))) {
    throw std::runtime_error("train state checksum mismatch: " + path);
  }

  pos = 0;
  if (std::memcmp(body.data(), kStateMagic, sizeof(kStateMagic)) != 0) {
    throw std::runtime_error("not a train state file: " + path);
  }
  pos += sizeof(kStateMagic);
  const auto d = read_pod<uint32_t>(body, pos);
  const auto hops = read_pod<uint32_t>(body, pos);
  const auto vsize = read_pod<uint32_t>(body, pos);
  if (static_cast<int>(d) != st.params.d || static_cast<int>(hops) != st.params.hops ||
      static_cast<int>(vsize) != st.params.vocab_size()) {
    throw std::runtime_error("train state does not match configuration");
  }
  for (auto& [name, span] : st.params.tensors()) {
    const size_t bytes = span.size() * sizeof(float);
    if (pos + bytes > body.size()) throw std::runtime_error("train state truncated");
    std::memcpy(span.data(), body.data() + pos, bytes);
    pos += bytes;
  }
  for (auto& adam : st.opt.per_tensor) {
    adam.t = read_pod<int64_t>(body, pos);
    const size_t bytes = adam.m.size() * sizeof(float);
    if (pos + 2 * bytes > body.size()) throw std::runtime_error("train state truncated");
    std::memcpy(adam.m.data(), body.data() + pos, bytes);
    pos += bytes;
    std::memcpy(adam.v.data(), body.data() + pos, bytes);
    pos += bytes;
  }
  st.next_epoch = read_pod<int32_t>(body, pos);
  st.best_val = read_pod<double>(body, pos);
  st.best_epoch = read_pod<int32_t>(body, pos);
  st.since_improve = read_pod<int32_t>(body, pos);
  const auto n_curve = read_pod<uint32_t>(body, pos);
  st.train_curve.resize(n_curve);
  st.val_curve.resize(n_curve);
  for (auto& v : st.train_curve) v = read_pod<double>(body, pos);
  for (auto& v : st.val_curve) v = read_pod<double>(body, pos);
}

void write_curve(const std::string& path, const TrainState& st) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write curve file: " + path);
  out << "epoch,train_loss,val_loss\n";
  for (size_t i = 0; i < st.train_curve.size(); ++i) {
    out << i + 1 << "," << st.train_curve[i] << "," << st.val_curve[i] << "\n";
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (d < 1) throw std::invalid_argument("d must be >= 1");
  if (hops < 1) throw std::invalid_argument("hops must be >= 1");
  if (!(learning_rate >= 0.0f)) throw std::invalid_argument("learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(val_fraction > 0.0f && val_fraction < 0.5f)) {
    throw std::invalid_argument("val_fraction must be in (0, 0.5)");
  }
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = 0; i + 1 < n; ++i) {
    size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

TrainingSample apply_variant(const TrainingSample& sample, Variant variant) {
  if (variant != Variant::AE) return sample;
  TrainingSample out = sample;
  out.target_counts = target_counts(sample.history);
  return out;
}

double batch_mean_gradient(const std::vector<TrainingSample>& samples,
                           const std::vector<size_t>& order, size_t begin, size_t end,
                           const ModelParams& params, Variant variant, int threads,
                           ModelParams& grads) {
  const size_t count = end - begin;
  if (count == 0) throw std::invalid_argument("batch_mean_gradient: empty batch");
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(count)));

  if (n_threads == 1) {
    GradAccum accum(params);
    ModelParams scratch = ModelParams::zeros_like(params);
    double loss_sum = 0.0;
    for (size_t i = begin; i < end; ++i) {
      scratch.zero();
      loss_sum += forward_backward(samples[order[i]], params, scratch, variant).total;
      accum.add(scratch);
    }
    accum.write_mean(grads, static_cast<double>(count));
    return loss_sum / static_cast<double>(count);
  }

  std::vector<GradAccum> partial(static_cast<size_t>(n_threads), GradAccum(params));
  std::vector<double> losses(n_threads, 0.0);
  const size_t chunk = (count + n_threads - 1) / n_threads;
  std::vector<std::thread> pool;
  for (int ti = 0; ti < n_threads; ++ti) {
    const size_t lo = begin + ti * chunk;
    const size_t hi = std::min(end, lo + chunk);
    pool.emplace_back([&, ti, lo, hi]() {
      ModelParams scratch = ModelParams::zeros_like(params);
      for (size_t i = lo; i < hi; ++i) {
        scratch.zero();
        losses[ti] += forward_backward(samples[order[i]], params, scratch, variant).total;
        partial[ti].add(scratch);
      }
    });
  }
  for (auto& t : pool) t.join();

  GradAccum total = std::move(partial[0]);
  double loss_sum = losses[0];
  for (int ti = 1; ti < n_threads; ++ti) {
    total.add(partial[ti]);
    loss_sum += losses[ti];
  }
  total.write_mean(grads, static_cast<double>(count));
  return loss_sum / static_cast<double>(count);
}

double evaluate_val(const ModelParams& params, const std::vector<TrainingSample>& samples,
                    Variant variant) {
  if (samples.empty()) throw std::invalid_argument("evaluate_val: empty validation set");
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += forward_loss(s, params, variant).total;
  }
  return sum / static_cast<double>(samples.size());
}

TrainReport train(const TrainConfig& config, const std::vector<TrainingSample>& raw_samples,
                  const Vocabulary& vocab, const std::string& out_dir, bool resume) {
  config.validate();
  if (raw_samples.size() < 2) {
    throw std::invalid_argument("train: need at least 2 samples");
  }
  std::filesystem::create_directories(out_dir);
  const std::string checkpoint_path =
      out_dir + "/checkpoint_" + variant_name(config.variant) + ".sumn";
  const std::string curve_path = out_dir + "/curve.csv";
  const std::string state_path = out_dir + "/train_state.bin";

  std::vector<TrainingSample> samples;
  samples.reserve(raw_samples.size());
  for (const auto& s : raw_samples) samples.push_back(apply_variant(s, config.variant));

  // Deterministic validation split.
  auto split_order = shuffled_indices(samples.size(), mix_seed(config.seed, kValSplitStream));
  size_t n_val = std::max<size_t>(
      1, static_cast<size_t>(std::llround(static_cast<double>(samples.size()) *
                                          config.val_fraction)));
  if (n_val >= samples.size()) n_val = samples.size() - 1;
  std::vector<TrainingSample> val_set;
  std::vector<TrainingSample> train_set;
  val_set.reserve(n_val);
  train_set.reserve(samples.size() - n_val);
  for (size_t i = 0; i < n_val; ++i) val_set.push_back(samples[split_order[i]]);
  for (size_t i = n_val; i < samples.size(); ++i) train_set.push_back(samples[split_order[i]]);

  Rng init_rng(config.seed);
  ModelParams params = ModelParams::init(vocab.size(), config.d, config.hops, init_rng);
  OptimizerState opt(params);
  TrainState st(std::move(params), std::move(opt));
  if (resume) load_state(state_path, st);

  AdamConfig adam_cfg;
  adam_cfg.lr = config.learning_rate;

  ModelParams grads = ModelParams::zeros_like(st.params);
  const int effective_threads = config.threads;

  int epoch = st.next_epoch;
  for (; epoch < config.max_epochs; ++epoch) {
    auto order = shuffled_indices(train_set.size(),
                                  mix_seed(config.seed, kEpochStreamBase + epoch));
    double epoch_loss = 0.0;
    size_t n_batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const size_t end = std::min(order.size(), begin + config.batch_size);
      const double batch_loss = batch_mean_gradient(train_set, order, begin, end, st.params,
                                                    config.variant, effective_threads, grads);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                 " batch " + std::to_string(n_batches) +
                                 "; parameter norms:" + tensor_norms(st.params));
      }
      clip_gradient(grads, config.clip_norm);
      auto param_tensors = st.params.tensors();
      auto grad_tensors = grads.tensors();
      for (size_t ti = 0; ti < param_tensors.size(); ++ti) {
        adam_step(param_tensors[ti].second, grad_tensors[ti].second, st.opt.per_tensor[ti],
                  adam_cfg);
      }
      epoch_loss += batch_loss;
      ++n_batches;
    }
    epoch_loss /= static_cast<double>(std::max<size_t>(1, n_batches));

    const double val = evaluate_val(st.params, val_set, config.variant);
    if (!std::isfinite(val)) {
      throw std::runtime_error("non-finite validation loss at epoch " +
                               std::to_string(epoch + 1) +
                               "; parameter norms:" + tensor_norms(st.params));
    }
    st.train_curve.push_back(epoch_loss);
    st.val_curve.push_back(val);

    if (st.best_epoch < 0 || val < st.best_val - config.min_delta) {
      st.best_val = val;
      st.best_epoch = epoch;
      st.since_improve = 0;
      save_checkpoint(checkpoint_path, st.params, vocab);
    } else {
      ++st.since_improve;
    }
    st.next_epoch = epoch + 1;
    save_state(state_path, st);
    write_curve(curve_path, st);
    if (st.since_improve >= config.patience) break;
  }

  TrainReport report;
  report.train_loss = st.train_curve;
  report.val_loss = st.val_curve;
  report.stopped_epoch = st.next_epoch;
  report.best_epoch = st.best_epoch + 1;  // 1-based for reporting
  report.best_val = st.best_val;
  report.checkpoint_path = checkpoint_path;
  return report;
}

}  // namespace sumn
