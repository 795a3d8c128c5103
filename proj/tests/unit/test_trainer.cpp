#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "sumn/checkpoint.hpp"
#include "sumn/ops.hpp"
#include "sumn/trainer.hpp"
#include "test_util.hpp"

using namespace sumn;

namespace {

Vocabulary demo_vocab(int n) {
  Vocabulary v;
  for (int i = 0; i < n; ++i) {
    std::string w = "w" + std::to_string(i);
    v.words.push_back(w);
    v.index[w] = i;
    v.counts[w] = 1;
  }
  return v;
}

std::vector<TrainingSample> demo_samples(int n, int vocab, uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSample> out;
  for (int i = 0; i < n; ++i) {
    TrainingSample s;
    s.user_id = "u" + std::to_string(i);
    const int behaviors = 1 + static_cast<int>(rng.below(4));
    for (int b = 0; b < behaviors; ++b) {
      std::vector<int> ids;
      const int words = 1 + static_cast<int>(rng.below(4));
      for (int w = 0; w < words; ++w) ids.push_back(static_cast<int>(rng.below(vocab)));
      s.history.push_back(std::move(ids));
    }
    const int targets = 1 + static_cast<int>(rng.below(4));
    for (int t = 0; t < targets; ++t) {
      s.target_counts[static_cast<int>(rng.below(vocab))] += 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig small_config(uint64_t seed) {
  TrainConfig tc;
  tc.d = 8;
  tc.hops = 2;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  tc.val_fraction = 0.25f;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("train with lr=0 leaves parameters at their initialization") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(12);
  auto samples = demo_samples(16, 12, 3);
  TrainConfig tc = small_config(7);
  tc.learning_rate = 0.0f;
  train(tc, samples, vocab, tmp.root());

  Checkpoint ckpt = load_checkpoint(tmp.path("checkpoint_SUMN.sumn"));
  Rng rng(tc.seed);
  ModelParams fresh = ModelParams::init(vocab.size(), tc.d, tc.hops, rng);
  auto a = fresh.tensors();
  auto b = ckpt.params.tensors();
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < a[i].second.size(); ++j) {
      CHECK(a[i].second[j] == b[i].second[j]);
    }
  }
}

TEST_CASE("overfitting one repeated sample approaches the entropy bound") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(10);
  TrainingSample s;
  s.user_id = "u";
  s.history = {{1, 2}, {3}};
  s.target_counts = {{1, 2}, {4, 1}};
  std::vector<TrainingSample> samples(8, s);

  TrainConfig tc;
  tc.d = 8;
  tc.hops = 2;
  tc.learning_rate = 0.01f;
  tc.batch_size = 8;
  tc.max_epochs = 200;
  tc.patience = 200;  // run to the end
  tc.val_fraction = 0.125f;
  tc.seed = 5;
  TrainReport report = train(tc, samples, vocab, tmp.root());

  Vector p = target_distribution(s.target_counts, vocab.size());
  double bound = 0.0;
  for (float v : p) {
    if (v > 0.0f) bound -= static_cast<double>(v) * std::log(static_cast<double>(v));
  }
  CHECK(report.train_loss.back() < bound + 0.05);
  // Loss decreased substantially from its starting point.
  CHECK(report.train_loss.back() < report.train_loss.front() - 0.5);
}

TEST_CASE("training twice with the same seed gives bit-identical checkpoints") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(12);
  auto samples = demo_samples(20, 12, 17);
  TrainConfig tc = small_config(99);
  train(tc, samples, vocab, tmp.root() + "/a");
  train(tc, samples, vocab, tmp.root() + "/b");
  CHECK(slurp(tmp.root() + "/a/checkpoint_SUMN.sumn") ==
        slurp(tmp.root() + "/b/checkpoint_SUMN.sumn"));
}

TEST_CASE("a batch of k identical samples matches batch size 1 updates") {
  Vocabulary vocab = demo_vocab(10);
  TrainingSample s = demo_samples(1, 10, 23)[0];

  // Mean gradient over k copies equals the single-sample gradient, so one
  // Adam step from the same state must land within float noise.
  Rng rng(31);
  ModelParams p1 = ModelParams::init(10, 6, 2, rng);
  ModelParams p2 = p1;

  std::vector<TrainingSample> one{s};
  std::vector<TrainingSample> four(4, s);
  std::vector<size_t> order1{0};
  std::vector<size_t> order4{0, 1, 2, 3};
  ModelParams g1 = ModelParams::zeros_like(p1);
  ModelParams gk = ModelParams::zeros_like(p2);
  batch_mean_gradient(one, order1, 0, 1, p1, Variant::SUMN, 1, g1);
  batch_mean_gradient(four, order4, 0, 4, p2, Variant::SUMN, 1, gk);

  AdamConfig cfg;
  std::vector<AdamState> st1, st2;
  auto t1 = p1.tensors();
  auto t2 = p2.tensors();
  auto gv1 = g1.tensors();
  auto gv2 = gk.tensors();
  for (size_t i = 0; i < t1.size(); ++i) {
    st1.emplace_back(t1[i].second.size());
    st2.emplace_back(t2[i].second.size());
    adam_step(t1[i].second, std::span<const float>(gv1[i].second), st1[i], cfg);
    adam_step(t2[i].second, std::span<const float>(gv2[i].second), st2[i], cfg);
  }
  for (size_t i = 0; i < t1.size(); ++i) {
    for (size_t j = 0; j < t1[i].second.size(); ++j) {
      CHECK(std::abs(t1[i].second[j] - t2[i].second[j]) < 1e-6f);
    }
  }
}

TEST_CASE("early stopping reports the minimum recorded validation loss") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(14);
  auto samples = demo_samples(24, 14, 41);
  TrainConfig tc = small_config(13);
  tc.max_epochs = 12;
  tc.patience = 2;
  TrainReport report = train(tc, samples, vocab, tmp.root());

  REQUIRE(!report.val_loss.empty());
  double min_val = report.val_loss[0];
  for (double v : report.val_loss) min_val = std::min(min_val, v);
  CHECK(report.best_val == doctest::Approx(min_val));
  CHECK(report.val_loss[static_cast<size_t>(report.best_epoch - 1)] ==
        doctest::Approx(min_val));
  for (double v : report.val_loss) CHECK(std::isfinite(v));
}

TEST_CASE("evaluate_val means forward losses") {
  Vocabulary vocab = demo_vocab(10);
  auto samples = demo_samples(6, 10, 53);
  Rng rng(54);
  ModelParams p = ModelParams::init(10, 6, 2, rng);

  const double one = evaluate_val(p, {samples[0]});
  CHECK(one == doctest::Approx(forward_loss(samples[0], p).total));

  // Duplicating the list cannot change the mean.
  std::vector<TrainingSample> doubled = samples;
  doubled.insert(doubled.end(), samples.begin(), samples.end());
  CHECK(evaluate_val(p, doubled) == doctest::Approx(evaluate_val(p, samples)));

  // Independent double-precision recomputation, sample by sample.
  double acc = 0.0;
  for (const auto& s : samples) acc += forward_loss(s, p).total;
  CHECK(evaluate_val(p, samples) == doctest::Approx(acc / samples.size()).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate_val(p, {}), std::invalid_argument);
}

TEST_CASE("apply_variant AE rewrites targets from history") {
  TrainingSample s;
  s.user_id = "u";
  s.history = {{0, 0, 1}};
  s.target_counts = {{2, 5}};
  TrainingSample ae = apply_variant(s, Variant::AE);
  CHECK(ae.target_counts == std::map<int, int>{{0, 2}, {1, 1}});
  // Other variants pass through.
  CHECK(apply_variant(s, Variant::SUMN).target_counts == s.target_counts);
  CHECK(apply_variant(s, Variant::MEAN).target_counts == s.target_counts);
}

TEST_CASE("variants share the prediction head code path") {
  // Identical user vectors must give identical predicted distributions no
  // matter which aggregation produced them.
  Rng rng(61);
  ModelParams p = ModelParams::init(12, 6, 2, rng);
  Vector u(6);
  for (float& x : u) x = rng.normal();
  Vector a = predict_distribution(u, p);
  Vector b = predict_distribution(u, p);
  CHECK(a == b);
}

TEST_CASE("multithreaded batches reproduce the fixed reduction order") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(12);
  auto samples = demo_samples(32, 12, 71);
  TrainConfig tc = small_config(3);
  tc.threads = 4;
  train(tc, samples, vocab, tmp.root() + "/a");
  train(tc, samples, vocab, tmp.root() + "/b");
  CHECK(slurp(tmp.root() + "/a/checkpoint_SUMN.sumn") ==
        slurp(tmp.root() + "/b/checkpoint_SUMN.sumn"));
}

TEST_CASE("resume matches an uninterrupted run") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(12);
  auto samples = demo_samples(24, 12, 83);

  TrainConfig full_cfg = small_config(29);
  full_cfg.max_epochs = 6;
  full_cfg.patience = 6;
  TrainReport full = train(full_cfg, samples, vocab, tmp.root() + "/full");

  TrainConfig part_cfg = full_cfg;
  part_cfg.max_epochs = 3;
  train(part_cfg, samples, vocab, tmp.root() + "/resumed");
  TrainReport resumed =
      train(full_cfg, samples, vocab, tmp.root() + "/resumed", /*resume=*/true);

  REQUIRE(full.train_loss.size() == resumed.train_loss.size());
  for (size_t i = 0; i < full.train_loss.size(); ++i) {
    CHECK(full.train_loss[i] == resumed.train_loss[i]);
    CHECK(full.val_loss[i] == resumed.val_loss[i]);
  }
  CHECK(slurp(tmp.root() + "/full/checkpoint_SUMN.sumn") ==
        slurp(tmp.root() + "/resumed/checkpoint_SUMN.sumn"));
}

TEST_CASE("train validates inputs") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(8);
  auto samples = demo_samples(4, 8, 91);
  TrainConfig tc = small_config(1);
  tc.val_fraction = 0.7f;
  CHECK_THROWS_AS(train(tc, samples, vocab, tmp.root()), std::invalid_argument);
  TrainConfig tc2 = small_config(1);
  CHECK_THROWS_AS(train(tc2, {samples[0]}, vocab, tmp.root()), std::invalid_argument);
}

TEST_CASE("train curve csv is written") {
  testutil::TempDir tmp;
  Vocabulary vocab = demo_vocab(10);
  auto samples = demo_samples(12, 10, 97);
  TrainConfig tc = small_config(55);
  TrainReport report = train(tc, samples, vocab, tmp.root());
  std::ifstream in(tmp.path("curve.csv"));
  REQUIRE(in);
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,train_loss,val_loss");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == report.train_loss.size());
}
