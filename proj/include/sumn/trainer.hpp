#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumn/adam.hpp"
#include "sumn/corpus.hpp"
#include "sumn/model.hpp"

namespace sumn {

struct TrainConfig {
  int d = 256;
  int hops = 5;
  float learning_rate = 1e-3f;
  int batch_size = 256;
  int max_epochs = 50;
  int patience = 3;         // evaluations without improvement before stopping
  float min_delta = 1e-4f;  // required validation improvement
  float val_fraction = 0.05f;
  uint64_t seed = 0;
  Variant variant = Variant::SUMN;
  float clip_norm = 0.0f;  // 0 disables gradient clipping
  int threads = 1;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int stopped_epoch = 0;
  int best_epoch = 0;
  double best_val = 0.0;
  std::string checkpoint_path;
};

// Per-epoch mini-batch training with Adam, seeded shuffles, validation-loss
// early stopping and best-checkpoint saving. Writes
//   <out_dir>/checkpoint_<variant>.sumn, <out_dir>/curve.csv,
//   <out_dir>/train_state.bin (for resuming).
// With resume=true, continues from the saved state in out_dir; subsequent
// epochs match an uninterrupted run exactly.
TrainReport train(const TrainConfig& config, const std::vector<TrainingSample>& samples,
                  const Vocabulary& vocab, const std::string& out_dir,
                  bool resume = false);

// Arithmetic mean of forward_loss totals over the set, gradients disabled.
double evaluate_val(const ModelParams& params, const std::vector<TrainingSample>& samples,
                    Variant variant = Variant::SUMN);

// AE rewrites the target counts from the history window (T = S); other
// variants pass through untouched.
TrainingSample apply_variant(const TrainingSample& sample, Variant variant);

// Mean gradient over samples[order[begin..end)], written into grads.
// Per-sample gradients accumulate into double buffers over fixed contiguous
// chunks reduced in thread order, so the result is independent of scheduling
// and a batch of k identical samples reproduces the single-sample gradient
// exactly. Returns the mean loss.
double batch_mean_gradient(const std::vector<TrainingSample>& samples,
                           const std::vector<size_t>& order, size_t begin, size_t end,
                           const ModelParams& params, Variant variant, int threads,
                           ModelParams& grads);

// Deterministic Fisher-Yates shuffle of 0..n-1.
std::vector<size_t> shuffled_indices(size_t n, uint64_t seed);

}  // namespace sumn
