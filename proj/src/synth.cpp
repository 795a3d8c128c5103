#include "sumn/synth.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sumn/matrix.hpp"

namespace sumn {

void SynthConfig::validate() const {
  if (n_users < 1) throw std::invalid_argument("n_users must be >= 1");
  if (n_factors < 1) throw std::invalid_argument("n_factors must be >= 1");
  if (topics_per_factor < 1) throw std::invalid_argument("topics_per_factor must be >= 1");
  if (words_per_behavior < 1) throw std::invalid_argument("words_per_behavior must be >= 1");
  if (behaviors_per_window < 1) {
    throw std::invalid_argument("behaviors_per_window must be >= 1");
  }
  if (!(noise_rate >= 0.0f && noise_rate < 1.0f)) {
    throw std::invalid_argument("noise_rate must be in [0, 1)");
  }
  const int n_topics = n_factors * 2 * topics_per_factor;
  if (vocab_size < n_topics) {
    throw std::invalid_argument("vocab too small for requested topics");
  }
  if (behaviors_per_window >= kWindowBoundary) {
    throw std::invalid_argument("behaviors_per_window exceeds the window width");
  }
}

namespace {

std::string synth_word(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%05d", id);
  return buf;
}

std::string synth_user_id(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%06d", idx);
  return buf;
}

std::string make_behavior(const SynthConfig& cfg,
                          const std::vector<std::vector<int>>& topics,
                          const std::vector<int>& factors, Rng& rng) {
  const int f = static_cast<int>(rng.below(cfg.n_factors));
  const int slot = static_cast<int>(rng.below(cfg.topics_per_factor));
  const auto& topic =
      topics[(static_cast<size_t>(f) * 2 + factors[f]) * cfg.topics_per_factor + slot];
  std::ostringstream text;
  for (int w = 0; w < cfg.words_per_behavior; ++w) {
    int word_id;
    if (rng.uniform() < cfg.noise_rate) {
      word_id = static_cast<int>(rng.below(cfg.vocab_size));
    } else {
      word_id = topic[rng.below(topic.size())];
    }
    if (w > 0) text << ' ';
    text << synth_word(word_id);
  }
  return text.str();
}

}  // namespace

std::vector<std::vector<int>> topic_partition(const SynthConfig& config) {
  const int n_topics = config.n_factors * 2 * config.topics_per_factor;
  std::vector<std::vector<int>> topics(n_topics);
  const int base = config.vocab_size / n_topics;
  const int extra = config.vocab_size % n_topics;
  int next = 0;
  for (int t = 0; t < n_topics; ++t) {
    const int size = base + (t < extra ? 1 : 0);
    for (int i = 0; i < size; ++i) topics[t].push_back(next++);
  }
  return topics;
}

std::vector<SynthUser> gen_corpus(const SynthConfig& config) {
  config.validate();
  const auto topics = topic_partition(config);
  std::vector<SynthUser> users;
  users.reserve(config.n_users);
  for (int ui = 0; ui < config.n_users; ++ui) {
    Rng rng(mix_seed(config.seed, static_cast<uint64_t>(ui)));
    SynthUser user;
    user.user_id = synth_user_id(ui);
    user.factors.reserve(config.n_factors);
    for (int f = 0; f < config.n_factors; ++f) {
      user.factors.push_back(static_cast<int>(rng.below(2)));
    }
    for (int b = 0; b < config.behaviors_per_window; ++b) {
      user.history_events.push_back(
          Event{b, make_behavior(config, topics, user.factors, rng)});
    }
    for (int b = 0; b < config.behaviors_per_window; ++b) {
      user.target_events.push_back(
          Event{kWindowBoundary + b, make_behavior(config, topics, user.factors, rng)});
    }
    users.push_back(std::move(user));
  }
  return users;
}

void write_synth_corpus(const std::vector<SynthUser>& users, const std::string& corpus_path) {
  std::ofstream out(corpus_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open corpus file for writing: " + corpus_path);
  for (const auto& user : users) {
    UserLog log;
    log.user_id = user.user_id;
    log.events = user.history_events;
    log.events.insert(log.events.end(), user.target_events.begin(), user.target_events.end());
    out << user_log_to_json(log) << "\n";
  }
}

void write_synth_labels(const std::vector<SynthUser>& users, int n_factors,
                        const std::string& labels_prefix) {
  for (int f = 0; f < n_factors; ++f) {
    const std::string path = labels_prefix + "_f" + std::to_string(f) + ".csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open labels file for writing: " + path);
    out << "user_id,label\n";
    for (const auto& user : users) {
      out << user.user_id << "," << user.factors[f] << "\n";
    }
  }
}

}  // namespace sumn
