// sumn: train and evaluate self-supervised user representations from
// JSONL behavior logs.
//
// Exit codes: 0 success, 1 check failure, 2 usage/IO error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sumn/checkpoint.hpp"
#include "sumn/corpus.hpp"
#include "sumn/downstream.hpp"
#include "sumn/gradcheck.hpp"
#include "sumn/model.hpp"
#include "sumn/reference.hpp"
#include "sumn/synth.hpp"
#include "sumn/trainer.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

json load_config_file(const std::string& path, const std::set<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json cfg = json::parse(in);
  if (!cfg.is_object()) throw std::runtime_error("config must be a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    if (!allowed.count(key)) throw std::runtime_error("unknown config key: " + key);
  }
  return cfg;
}

void echo_config(const json& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/run_config.json");
  out << cfg.dump(2) << "\n";
}

template <typename T>
void take(const json& cfg, const char* key, T& into) {
  if (cfg.contains(key)) into = cfg.at(key).get<T>();
}

// ---------------------------------------------------------------------------
// build-vocab

struct BuildVocabArgs {
  std::string in_path, out_path;
  int max_size = 50000;
  int min_count = 1;
};

int cmd_build_vocab(const BuildVocabArgs& args) {
  if (args.max_size < 1) {
    std::cerr << "error: --max-size must be >= 1\n";
    return kExitUsage;
  }
  if (args.min_count < 1) {
    std::cerr << "error: --min-count must be >= 1\n";
    return kExitUsage;
  }
  if (!std::filesystem::exists(args.in_path)) {
    std::cerr << "error: input path does not exist: " << args.in_path << "\n";
    return kExitUsage;
  }
  auto logs = sumn::read_user_logs(args.in_path);
  sumn::WordCounts counts;
  for (const auto& log : logs) {
    for (const auto& ev : log.events) sumn::count_words(ev.text, counts);
  }
  sumn::Vocabulary vocab = sumn::build_vocab(counts, args.max_size, args.min_count);
  sumn::save_vocab(vocab, args.out_path);
  std::cout << "wrote " << vocab.size() << " words to " << args.out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config_path;
  std::string out_dir_override;
  int64_t seed_override = -1;
  int threads_override = 0;
  bool deterministic = false;
  bool resume = false;
};

int cmd_train(const TrainArgs& args) {
  static const std::set<std::string> allowed{
      "data",       "vocab",      "boundary_ts", "max_behaviors", "max_words",
      "d",          "hops",       "learning_rate", "batch_size",  "max_epochs",
      "patience",   "min_delta",  "val_fraction",  "seed",        "variant",
      "clip_norm",  "threads",    "out_dir"};
  json cfg = load_config_file(args.config_path, allowed);

  std::string data_path = cfg.at("data").get<std::string>();
  std::string vocab_path = cfg.at("vocab").get<std::string>();
  int64_t boundary_ts = cfg.at("boundary_ts").get<int64_t>();
  sumn::SampleCaps caps;
  take(cfg, "max_behaviors", caps.max_behaviors);
  take(cfg, "max_words", caps.max_words);
  std::string out_dir = "sumn_run";
  take(cfg, "out_dir", out_dir);

  sumn::TrainConfig tc;
  take(cfg, "d", tc.d);
  take(cfg, "hops", tc.hops);
  take(cfg, "learning_rate", tc.learning_rate);
  take(cfg, "batch_size", tc.batch_size);
  take(cfg, "max_epochs", tc.max_epochs);
  take(cfg, "patience", tc.patience);
  take(cfg, "min_delta", tc.min_delta);
  take(cfg, "val_fraction", tc.val_fraction);
  take(cfg, "clip_norm", tc.clip_norm);
  take(cfg, "threads", tc.threads);
  if (cfg.contains("seed")) tc.seed = cfg.at("seed").get<uint64_t>();
  if (cfg.contains("variant")) tc.variant = sumn::parse_variant(cfg.at("variant"));

  // Flags win over the config file.
  if (args.seed_override >= 0) tc.seed = static_cast<uint64_t>(args.seed_override);
  if (args.threads_override > 0) tc.threads = args.threads_override;
  if (args.deterministic) tc.threads = 1;
  if (!args.out_dir_override.empty()) out_dir = args.out_dir_override;
  tc.validate();
  if (caps.max_behaviors < 1 || caps.max_words < 1) {
    throw std::invalid_argument("max_behaviors and max_words must be >= 1");
  }

  json resolved = cfg;
  resolved["seed"] = tc.seed;
  resolved["threads"] = tc.threads;
  resolved["out_dir"] = out_dir;
  resolved["variant"] = sumn::variant_name(tc.variant);
  echo_config(resolved, out_dir);

  sumn::Vocabulary vocab = sumn::load_vocab(vocab_path);
  auto logs = sumn::read_user_logs(data_path);
  std::vector<sumn::TrainingSample> samples;
  size_t skipped = 0;
  for (const auto& log : logs) {
    auto s = sumn::split_sample(log, boundary_ts, vocab, caps);
    if (s.has_value()) {
      samples.push_back(std::move(*s));
    } else {
      ++skipped;
    }
  }
  std::cout << "loaded " << samples.size() << " samples (" << skipped << " skipped)\n";

  sumn::TrainReport report = sumn::train(tc, samples, vocab, out_dir, args.resume);
  std::cout << "stopped after epoch " << report.stopped_epoch << "; best epoch "
            << report.best_epoch << " val loss " << report.best_val << "\n"
            << "checkpoint: " << report.checkpoint_path << "\n"
            << "curve: " << out_dir << "/curve.csv\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string checkpoint, in_path, out_path;
  std::string variant = "SUMN";
  int max_behaviors = 25;
  int max_words = 35;
  int64_t before_ts = -1;  // <0: use all events
};

int cmd_infer(const InferArgs& args) {
  const sumn::Variant variant = sumn::parse_variant(args.variant);
  if (args.max_behaviors < 1 || args.max_words < 1) {
    std::cerr << "error: --max-behaviors and --max-words must be >= 1\n";
    return kExitUsage;
  }
  sumn::Checkpoint ckpt = sumn::load_checkpoint(args.checkpoint);
  auto logs = sumn::read_user_logs(args.in_path);

  std::vector<std::pair<std::string, sumn::Vector>> rows;
  size_t skipped = 0;
  for (const auto& log : logs) {
    std::vector<std::vector<int>> history;
    for (const auto& ev : log.events) {
      if (args.before_ts >= 0 && ev.ts >= args.before_ts) continue;
      auto ids = sumn::encode_behavior(ev.text, ckpt.vocab, args.max_words);
      if (!ids.empty()) history.push_back(std::move(ids));
    }
    if (history.empty()) {
      ++skipped;
      continue;
    }
    if (history.size() > static_cast<size_t>(args.max_behaviors)) {
      history.erase(history.begin(), history.end() - args.max_behaviors);
    }
    rows.emplace_back(log.user_id, sumn::infer(history, ckpt.params, variant));
  }
  sumn::write_embeddings(rows, args.out_path);
  std::cout << "inferred " << rows.size() << " users, skipped " << skipped
            << " with no usable behaviors\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string config_path;
  std::string embeddings, labels, out_path, pca_out;
  sumn::ProbeConfig probe;
  int64_t seed_override = -1;
};

int cmd_eval(EvalArgs args) {
  if (!args.config_path.empty()) {
    static const std::set<std::string> allowed{
        "embeddings", "labels",     "out",  "pca_out",       "hidden_dim",
        "learning_rate", "batch_size", "max_epochs", "seed", "test_fraction"};
    json cfg = load_config_file(args.config_path, allowed);
    take(cfg, "embeddings", args.embeddings);
    take(cfg, "labels", args.labels);
    take(cfg, "out", args.out_path);
    take(cfg, "pca_out", args.pca_out);
    take(cfg, "hidden_dim", args.probe.hidden_dim);
    take(cfg, "learning_rate", args.probe.learning_rate);
    take(cfg, "batch_size", args.probe.batch_size);
    take(cfg, "max_epochs", args.probe.max_epochs);
    take(cfg, "test_fraction", args.probe.test_fraction);
    if (cfg.contains("seed")) args.probe.seed = cfg.at("seed").get<uint64_t>();
  }
  if (args.seed_override >= 0) args.probe.seed = static_cast<uint64_t>(args.seed_override);
  args.probe.validate();
  if (args.embeddings.empty() || args.labels.empty()) {
    std::cerr << "error: --embeddings and --labels are required\n";
    return kExitUsage;
  }

  auto embeddings = sumn::read_embeddings(args.embeddings);
  auto labels = sumn::read_labels(args.labels);
  auto data = sumn::join_embeddings_labels(embeddings, labels);
  sumn::ProbeMetrics metrics = sumn::train_probe(data, args.probe);

  json out{{"accuracy", metrics.accuracy},
           {"n_train", metrics.n_train},
           {"n_test", metrics.n_test},
           {"n_classes", metrics.n_classes}};
  if (metrics.has_auc) out["auc"] = metrics.auc;
  out["config"] = {{"hidden_dim", args.probe.hidden_dim},
                   {"learning_rate", args.probe.learning_rate},
                   {"batch_size", args.probe.batch_size},
                   {"max_epochs", args.probe.max_epochs},
                   {"seed", args.probe.seed},
                   {"test_fraction", args.probe.test_fraction}};

  if (!args.pca_out.empty()) {
    const int d = static_cast<int>(data[0].vec.size());
    const int k = std::min(3, std::min(static_cast<int>(data.size()), d));
    sumn::Matrix X(static_cast<int>(data.size()), d);
    for (size_t r = 0; r < data.size(); ++r) {
      std::copy(data[r].vec.begin(), data[r].vec.end(), X.row(static_cast<int>(r)));
    }
    sumn::PcaResult pca = sumn::pca_project(X, k);
    std::ofstream pf(args.pca_out);
    if (!pf) throw std::runtime_error("cannot write PCA export: " + args.pca_out);
    pf << "user_id,label";
    for (int c = 0; c < k; ++c) pf << ",pc" << c + 1;
    pf << "\n";
    for (size_t r = 0; r < data.size(); ++r) {
      pf << data[r].user_id << "," << data[r].label;
      for (int c = 0; c < k; ++c) pf << "," << pca.projections.at(static_cast<int>(r), c);
      pf << "\n";
    }
  }

  const std::string text = out.dump(2);
  if (!args.out_path.empty()) {
    std::ofstream of(args.out_path);
    if (!of) throw std::runtime_error("cannot write metrics: " + args.out_path);
    of << text << "\n";
  }
  std::cout << text << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string config_path;
  std::string out_dir_override;
  int64_t seed_override = -1;
};

int cmd_synth(const SynthArgs& args) {
  static const std::set<std::string> allowed{
      "n_users",        "n_factors",  "topics_per_factor", "vocab_size",
      "words_per_behavior", "behaviors_per_window", "noise_rate", "seed", "out_dir"};
  json cfg = load_config_file(args.config_path, allowed);
  sumn::SynthConfig sc;
  take(cfg, "n_users", sc.n_users);
  take(cfg, "n_factors", sc.n_factors);
  take(cfg, "topics_per_factor", sc.topics_per_factor);
  take(cfg, "vocab_size", sc.vocab_size);
  take(cfg, "words_per_behavior", sc.words_per_behavior);
  take(cfg, "behaviors_per_window", sc.behaviors_per_window);
  take(cfg, "noise_rate", sc.noise_rate);
  if (cfg.contains("seed")) sc.seed = cfg.at("seed").get<uint64_t>();
  std::string out_dir = "synth_out";
  take(cfg, "out_dir", out_dir);
  if (args.seed_override >= 0) sc.seed = static_cast<uint64_t>(args.seed_override);
  if (!args.out_dir_override.empty()) out_dir = args.out_dir_override;
  sc.validate();

  json resolved = cfg;
  resolved["seed"] = sc.seed;
  resolved["out_dir"] = out_dir;
  echo_config(resolved, out_dir);

  auto users = sumn::gen_corpus(sc);
  sumn::write_synth_corpus(users, out_dir + "/corpus.jsonl");
  sumn::write_synth_labels(users, sc.n_factors, out_dir + "/labels");
  std::cout << "wrote " << users.size() << " users to " << out_dir << "/corpus.jsonl\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  int d = 8;
  int vocab = 50;
  int hops = 2;
  int behaviors = 3;
  uint64_t seed = 0;
  float h = 1e-3f;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  sumn::Rng rng(args.seed);
  sumn::ModelParams params =
      sumn::ModelParams::init(args.vocab, args.d, args.hops, rng);
  sumn::TrainingSample sample;
  sample.user_id = "gradcheck";
  for (int b = 0; b < args.behaviors; ++b) {
    std::vector<int> ids;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.below(args.vocab)));
    sample.history.push_back(std::move(ids));
  }
  for (int i = 0; i < 5; ++i) {
    sample.target_counts[static_cast<int>(rng.below(args.vocab))] +=
        1 + static_cast<int>(rng.below(4));
  }

  sumn::ModelParams grads = sumn::ModelParams::zeros_like(params);
  sumn::forward_backward(sample, params, grads);
  if (args.inject_fault) {
    for (float& g : grads.Wo.data) g *= 2.0f;
  }

  // Differentiate the double-precision reference forward; see gradcheck.hpp
  // for why zero-gradient directions use an absolute floor.
  auto loss_fn = [&]() { return sumn::reference_loss(sample, params); };
  double max_err = 0.0;
  auto pt = params.tensors();
  auto gt = grads.tensors();
  for (size_t i = 0; i < pt.size(); ++i) {
    const double err =
        sumn::finite_diff_check(loss_fn, pt[i].second,
                                std::span<const float>(gt[i].second), args.h,
                                SIZE_MAX, 0, 1e-4);
    std::cout << pt[i].first << ": " << err << "\n";
    max_err = std::max(max_err, err);
  }
  std::cout << "max relative error: " << max_err << "\n";
  return max_err < 1e-3 ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SUMN: universal user representations from behavior logs"};
  app.require_subcommand(1);

  BuildVocabArgs bv;
  auto* sub_bv = app.add_subcommand("build-vocab", "Build a capped vocabulary from JSONL logs");
  sub_bv->add_option("--in", bv.in_path, "input JSONL path")->required();
  sub_bv->add_option("--out", bv.out_path, "output vocabulary path")->required();
  sub_bv->add_option("--max-size", bv.max_size, "vocabulary cap");
  sub_bv->add_option("--min-count", bv.min_count, "minimum corpus frequency");

  TrainArgs tr;
  auto* sub_tr = app.add_subcommand("train", "Train a model from a JSON config");
  sub_tr->add_option("--config", tr.config_path, "JSON config path")->required();
  sub_tr->add_option("--seed", tr.seed_override, "override config seed");
  sub_tr->add_option("--threads", tr.threads_override, "override worker threads");
  sub_tr->add_option("--out-dir", tr.out_dir_override, "override output directory");
  sub_tr->add_flag("--deterministic", tr.deterministic, "force single-threaded batches");
  sub_tr->add_flag("--resume", tr.resume, "resume from train_state.bin in the output dir");

  InferArgs inf;
  auto* sub_inf = app.add_subcommand("infer", "Write user embeddings for a JSONL log");
  sub_inf->add_option("--checkpoint", inf.checkpoint, "checkpoint path")->required();
  sub_inf->add_option("--in", inf.in_path, "input JSONL path")->required();
  sub_inf->add_option("--out", inf.out_path, "output embeddings JSONL path")->required();
  sub_inf->add_option("--variant", inf.variant, "aggregation variant (SUMN/AE/MEAN/MAX)");
  sub_inf->add_option("--max-behaviors", inf.max_behaviors, "behavior truncation cap");
  sub_inf->add_option("--max-words", inf.max_words, "word truncation cap");
  sub_inf->add_option("--before-ts", inf.before_ts, "only use events before this timestamp");

  EvalArgs ev;
  auto* sub_ev = app.add_subcommand("eval", "Probe frozen embeddings against labels");
  sub_ev->add_option("--config", ev.config_path, "JSON config path");
  sub_ev->add_option("--embeddings", ev.embeddings, "embeddings JSONL path");
  sub_ev->add_option("--labels", ev.labels, "labels CSV path");
  sub_ev->add_option("--out", ev.out_path, "metrics JSON output path");
  sub_ev->add_option("--pca-out", ev.pca_out, "PCA export CSV path");
  sub_ev->add_option("--hidden-dim", ev.probe.hidden_dim, "probe hidden width");
  sub_ev->add_option("--learning-rate", ev.probe.learning_rate, "probe learning rate");
  sub_ev->add_option("--batch-size", ev.probe.batch_size, "probe batch size");
  sub_ev->add_option("--max-epochs", ev.probe.max_epochs, "probe epochs");
  sub_ev->add_option("--test-fraction", ev.probe.test_fraction, "held-out fraction");
  sub_ev->add_option("--seed", ev.seed_override, "probe seed");

  SynthArgs sy;
  auto* sub_sy = app.add_subcommand("synth", "Generate a synthetic corpus with planted factors");
  sub_sy->add_option("--config", sy.config_path, "JSON config path")->required();
  sub_sy->add_option("--seed", sy.seed_override, "override config seed");
  sub_sy->add_option("--out-dir", sy.out_dir_override, "override output directory");

  GradcheckArgs gc;
  auto* sub_gc = app.add_subcommand("gradcheck", "Check full-model gradients against finite differences");
  sub_gc->add_option("--d", gc.d, "embedding dimension");
  sub_gc->add_option("--vocab", gc.vocab, "vocabulary size");
  sub_gc->add_option("--hops", gc.hops, "hop count");
  sub_gc->add_option("--behaviors", gc.behaviors, "history size");
  sub_gc->add_option("--seed", gc.seed, "rng seed");
  sub_gc->add_option("--h", gc.h, "finite-difference step");
  sub_gc->add_flag("--inject-fault", gc.inject_fault, "scale one gradient by 2 (self-test)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (sub_bv->parsed()) return cmd_build_vocab(bv);
    if (sub_tr->parsed()) return cmd_train(tr);
    if (sub_inf->parsed()) return cmd_infer(inf);
    if (sub_ev->parsed()) return cmd_eval(ev);
    if (sub_sy->parsed()) return cmd_synth(sy);
    if (sub_gc->parsed()) return cmd_gradcheck(gc);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
