#include "sumn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sumn {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void count_words(const std::string& text, WordCounts& counts) {
  for (auto& w : tokenize(text)) counts[w] += 1;
}

void merge_counts(WordCounts& into, const WordCounts& from) {
  for (const auto& [w, c] : from) into[w] += c;
}

Vocabulary build_vocab(const WordCounts& counts, int max_size, int min_count) {
  if (max_size < 1) throw std::invalid_argument("build_vocab: max_size must be >= 1");
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");

  std::vector<std::pair<std::string, int64_t>> kept;
  kept.reserve(counts.size());
  for (const auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  if (kept.empty()) throw std::runtime_error("no tokens");

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.size() > static_cast<size_t>(max_size)) kept.resize(max_size);

  Vocabulary v;
  v.words.reserve(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) {
    v.words.push_back(kept[i].first);
    v.index[kept[i].first] = static_cast<int>(i);
    v.counts[kept[i].first] = kept[i].second;
  }
  return v;
}

Vocabulary build_vocab(const std::vector<std::string>& texts, int max_size, int min_count) {
  WordCounts counts;
  for (const auto& t : texts) count_words(t, counts);
  return build_vocab(counts, max_size, min_count);
}

std::vector<int> encode_behavior(const std::string& text, const Vocabulary& vocab,
                                 int max_words) {
  if (max_words < 1) throw std::invalid_argument("encode_behavior: max_words must be >= 1");
  std::vector<int> ids;
  for (const auto& w : tokenize(text)) {
    if (static_cast<int>(ids.size()) >= max_words) break;
    int id = vocab.id_of(w);
    if (id >= 0) ids.push_back(id);
  }
  return ids;
}

std::optional<TrainingSample> split_sample(const UserLog& log, int64_t boundary_ts,
                                           const Vocabulary& vocab,
                                           const SampleCaps& caps) {
  std::vector<std::vector<int>> history;
  std::vector<std::vector<int>> target;
  for (const auto& ev : log.events) {
    auto ids = encode_behavior(ev.text, vocab, caps.max_words);
    if (ids.empty()) continue;
    if (ev.ts < boundary_ts) {
      history.push_back(std::move(ids));
    } else {
      target.push_back(std::move(ids));
    }
  }
  if (history.empty() || target.empty()) return std::nullopt;

  // Truncation keeps the most recent behaviors.
  if (history.size() > static_cast<size_t>(caps.max_behaviors)) {
    history.erase(history.begin(), history.end() - caps.max_behaviors);
  }

  TrainingSample s;
  s.user_id = log.user_id;
  s.history = std::move(history);
  s.target_counts = target_counts(target);
  return s;
}

std::map<int, int> target_counts(const std::vector<std::vector<int>>& behaviors) {
  std::map<int, int> counts;
  for (const auto& b : behaviors) {
    for (int id : b) counts[id] += 1;
  }
  return counts;
}

UserLog parse_user_log(const std::string& json_line) {
  nlohmann::json j = nlohmann::json::parse(json_line);
  UserLog log;
  log.user_id = j.at("user_id").get<std::string>();
  if (log.user_id.empty()) throw std::runtime_error("user_id must be non-empty");
  for (const auto& e : j.at("events")) {
    Event ev;
    ev.ts = e.at("ts").get<int64_t>();
    if (ev.ts < 0) throw std::runtime_error("event ts must be >= 0");
    ev.text = e.at("text").get<std::string>();
    log.events.push_back(std::move(ev));
  }
  std::stable_sort(log.events.begin(), log.events.end(),
                   [](const Event& a, const Event& b) { return a.ts < b.ts; });
  return log;
}

std::vector<UserLog> read_user_logs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  std::vector<UserLog> logs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      logs.push_back(parse_user_log(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return logs;
}

std::string user_log_to_json(const UserLog& log) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : log.events) {
    events.push_back({{"ts", ev.ts}, {"text", ev.text}});
  }
  nlohmann::json j{{"user_id", log.user_id}, {"events", events}};
  return j.dump();
}

void write_vocab(const Vocabulary& vocab, std::ostream& out) {
  out << "sumn-vocab v1 " << vocab.size() << "\n";
  for (const auto& w : vocab.words) out << w << "\n";
}

Vocabulary read_vocab(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty vocabulary file");
  std::istringstream hs(header);
  std::string magic, version;
  int size = -1;
  hs >> magic >> version >> size;
  if (magic != "sumn-vocab" || version != "v1" || size < 0) {
    throw std::runtime_error("bad vocabulary header: " + header);
  }
  Vocabulary v;
  std::string word;
  for (int i = 0; i < size; ++i) {
    if (!std::getline(in, word)) throw std::runtime_error("truncated vocabulary file");
    v.words.push_back(word);
    v.index[word] = i;
    v.counts[word] = 0;  // corpus frequencies are not part of the file format
  }
  return v;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  write_vocab(vocab, out);
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  return read_vocab(in);
}

}  // namespace sumn
