#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumn/corpus.hpp"

namespace sumn {

// Generator for behavior corpora with planted binary user factors. Each
// factor value owns a disjoint slice of the vocabulary (split into topics);
// every behavior draws its words from one topic on the user's side of one
// factor, mixed with uniform noise. History and target windows share the
// user's factors, so behavioral consistency holds by construction.
struct SynthConfig {
  int n_users = 1000;
  int n_factors = 1;         // binary latent attributes per user
  int topics_per_factor = 2; // topics per factor value
  int vocab_size = 1000;
  int words_per_behavior = 6;
  int behaviors_per_window = 20;
  float noise_rate = 0.1f;
  uint64_t seed = 0;

  void validate() const;
};

// History timestamps live in [0, B), target timestamps in [B, 2B).
inline constexpr int64_t kWindowBoundary = 1'000'000;

struct SynthUser {
  std::string user_id;
  std::vector<int> factors;  // one bit per factor
  std::vector<Event> history_events;
  std::vector<Event> target_events;
};

std::vector<SynthUser> gen_corpus(const SynthConfig& config);

// Corpus JSONL plus one labels CSV per factor (<labels_prefix>_f<k>.csv).
void write_synth_corpus(const std::vector<SynthUser>& users, const std::string& corpus_path);
void write_synth_labels(const std::vector<SynthUser>& users, int n_factors,
                        const std::string& labels_prefix);

// The word slices owned by each (factor, value, topic); used by tests as the
// exact ground-truth classifier.
std::vector<std::vector<int>> topic_partition(const SynthConfig& config);

}  // namespace sumn
