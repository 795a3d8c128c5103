#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

namespace sumn {

// One user event carrying text (review title, query, tweet...).
struct Event {
  int64_t ts = 0;
  std::string text;
};

struct UserLog {
  std::string user_id;
  std::vector<Event> events;  // sorted ascending by ts after ingestion
};

// Frequency-capped word->id map shared by the encoder and prediction head.
// Ids are dense 0..|V|-1, assigned by descending frequency then
// lexicographic order.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;
  std::unordered_map<std::string, int64_t> counts;

  int size() const { return static_cast<int>(words.size()); }
  // -1 when the word is out of vocabulary.
  int id_of(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? -1 : it->second;
  }
};

using WordCounts = std::unordered_map<std::string, int64_t>;

// One user's encoded history window plus word counts of the target window.
struct TrainingSample {
  std::string user_id;
  std::vector<std::vector<int>> history;
  std::map<int, int> target_counts;
};

// Truncation thresholds: UL.|S| behaviors per user, UL.|x| words per behavior.
struct SampleCaps {
  int max_behaviors = 25;
  int max_words = 35;
};

// Lowercases and splits on any non-alphanumeric byte; separators are
// discarded and empty tokens removed.
std::vector<std::string> tokenize(const std::string& text);

// Shardable counting: merge is commutative, so shard order cannot change the
// final vocabulary.
void count_words(const std::string& text, WordCounts& counts);
void merge_counts(WordCounts& into, const WordCounts& from);

// Top max_size words with frequency >= min_count; frequency ties break
// lexicographically. Throws "no tokens" when nothing survives.
Vocabulary build_vocab(const WordCounts& counts, int max_size, int min_count);
Vocabulary build_vocab(const std::vector<std::string>& texts, int max_size, int min_count);

// Tokenize, drop out-of-vocabulary words, truncate to the first max_words ids.
std::vector<int> encode_behavior(const std::string& text, const Vocabulary& vocab,
                                 int max_words);

// Events before boundary_ts form the history window, the rest the target
// window. Keeps the most recent max_behaviors non-empty encoded behaviors.
// Returns nullopt when either window is empty after encoding.
std::optional<TrainingSample> split_sample(const UserLog& log, int64_t boundary_ts,
                                           const Vocabulary& vocab, const SampleCaps& caps);

// Exact multiset count of word ids across all behaviors.
std::map<int, int> target_counts(const std::vector<std::vector<int>>& behaviors);

// JSONL record: {"user_id": "...", "events": [{"ts": 0, "text": "..."}, ...]}
UserLog parse_user_log(const std::string& json_line);
std::vector<UserLog> read_user_logs(const std::string& path);

std::string user_log_to_json(const UserLog& log);

// Vocabulary file: header "sumn-vocab v1 <size>", then one word per line.
void write_vocab(const Vocabulary& vocab, std::ostream& out);
Vocabulary read_vocab(std::istream& in);
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace sumn
