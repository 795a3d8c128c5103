#include <doctest.h>

#include <cmath>

#include "sumn/adam.hpp"
#include "sumn/gradcheck.hpp"
#include "sumn/model.hpp"
#include "sumn/reference.hpp"
#include "sumn/ops.hpp"

using namespace sumn;

namespace {

ModelParams tiny_params(int vocab, int d, int hops, uint64_t seed) {
  Rng rng(seed);
  return ModelParams::init(vocab, d, hops, rng);
}

TrainingSample random_sample(int vocab, int behaviors, int max_words, uint64_t seed) {
  Rng rng(seed);
  TrainingSample s;
  s.user_id = "u";
  for (int b = 0; b < behaviors; ++b) {
    std::vector<int> ids;
    const int n = 1 + static_cast<int>(rng.below(max_words));
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.below(vocab)));
    s.history.push_back(std::move(ids));
  }
  const int n_targets = 1 + static_cast<int>(rng.below(5));
  for (int i = 0; i < n_targets; ++i) {
    s.target_counts[static_cast<int>(rng.below(vocab))] += 1 + static_cast<int>(rng.below(3));
  }
  return s;
}

double entropy_bound(const Vector& p) {
  double h = 0.0;
  for (float v : p) {
    if (v > 0.0f) h -= static_cast<double>(v) * std::log(static_cast<double>(v));
  }
  return h;
}

}  // namespace

TEST_CASE("embed_behaviors averages word vectors") {
  ModelParams p = tiny_params(4, 2, 1, 1);
  p.embeddings.at(0, 0) = 0.0f;
  p.embeddings.at(0, 1) = 2.0f;
  p.embeddings.at(1, 0) = 2.0f;
  p.embeddings.at(1, 1) = 0.0f;

  Matrix single = embed_behaviors({{0}}, p);
  CHECK(single.at(0, 0) == 0.0f);
  CHECK(single.at(0, 1) == 2.0f);

  Matrix dup = embed_behaviors({{0, 0}}, p);
  CHECK(dup.at(0, 0) == doctest::Approx(0.0f));
  CHECK(dup.at(0, 1) == doctest::Approx(2.0f));

  Matrix mixed = embed_behaviors({{0, 1}}, p);
  CHECK(mixed.at(0, 0) == doctest::Approx(1.0f));
  CHECK(mixed.at(0, 1) == doctest::Approx(1.0f));

  CHECK_THROWS_AS(embed_behaviors({}, p), std::invalid_argument);
  CHECK_THROWS_AS(embed_behaviors({{}}, p), std::invalid_argument);
  CHECK_THROWS_AS(embed_behaviors({{7}}, p), std::invalid_argument);
}

TEST_CASE("aggregate with a single behavior puts full attention on it") {
  ModelParams p = tiny_params(6, 4, 3, 2);
  Matrix E = embed_behaviors({{1, 2}}, p);
  HopTrace tr = aggregate(E, p);
  REQUIRE(tr.alphas.rows == 3);
  for (int h = 0; h < 3; ++h) CHECK(tr.alphas.at(h, 0) == doctest::Approx(1.0f));

  // u^(1) = LN(m0 + v1) with v1 = LN(Wv e1).
  Vector v1 = layer_norm(linear(p.Wv, Vector(E.row(0), E.row(0) + 4)), p.lnv_gain,
                         p.lnv_bias);
  Vector m1 = p.m0;
  axpy(1.0f, v1, m1);
  Vector u1 = layer_norm(m1, p.lnu_gain, p.lnu_bias);
  for (int c = 0; c < 4; ++c) CHECK(tr.users[0][c] == doctest::Approx(u1[c]));
}

TEST_CASE("aggregate with identical behaviors is uniform and matches the singleton") {
  ModelParams p = tiny_params(6, 4, 3, 3);
  Matrix one = embed_behaviors({{2, 4}}, p);
  Matrix four = embed_behaviors({{2, 4}, {2, 4}, {2, 4}, {2, 4}}, p);
  HopTrace tr1 = aggregate(one, p);
  HopTrace tr4 = aggregate(four, p);
  for (int h = 0; h < 3; ++h) {
    for (int t = 0; t < 4; ++t) CHECK(tr4.alphas.at(h, t) == doctest::Approx(0.25f));
    for (int c = 0; c < 4; ++c) {
      CHECK(tr4.users[h][c] == doctest::Approx(tr1.users[h][c]).epsilon(1e-4));
    }
  }
}

TEST_CASE("aggregate is permutation-equivariant in the behaviors") {
  ModelParams p = tiny_params(10, 8, 4, 4);
  const std::vector<std::vector<int>> hist{{1, 2, 3}, {4}, {5, 6}, {7, 8, 9}};
  const std::vector<std::vector<int>> perm{{5, 6}, {7, 8, 9}, {1, 2, 3}, {4}};
  const int mapping[4] = {2, 3, 0, 1};  // perm[i] == hist[mapping[i]]
  HopTrace a = aggregate(embed_behaviors(hist, p), p);
  HopTrace b = aggregate(embed_behaviors(perm, p), p);
  for (int h = 0; h < 4; ++h) {
    for (int c = 0; c < 8; ++c) {
      CHECK(b.users[h][c] == doctest::Approx(a.users[h][c]).epsilon(1e-5));
    }
    for (int t = 0; t < 4; ++t) {
      CHECK(b.alphas.at(h, t) == doctest::Approx(a.alphas.at(h, mapping[t])).epsilon(1e-5));
    }
  }
}

TEST_CASE("attention rows sum to one on random instances") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed * 31 + 5);
    const int d = 2 + static_cast<int>(rng.below(12));
    const int vocab = 5 + static_cast<int>(rng.below(40));
    const int hops = 1 + static_cast<int>(rng.below(5));
    const int behaviors = 1 + static_cast<int>(rng.below(8));
    ModelParams p = tiny_params(vocab, d, hops, seed + 1000);
    TrainingSample s = random_sample(vocab, behaviors, 6, seed + 2000);
    HopTrace tr = aggregate(embed_behaviors(s.history, p), p);
    for (int h = 0; h < hops; ++h) {
      double sum = 0.0;
      for (int t = 0; t < behaviors; ++t) {
        CHECK(tr.alphas.at(h, t) > 0.0f);
        sum += tr.alphas.at(h, t);
      }
      CHECK(std::abs(sum - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("predict_distribution closed forms") {
  ModelParams p = tiny_params(5, 3, 1, 6);

  SUBCASE("zero Wo gives the uniform distribution") {
    p.Wo.fill(0.0f);
    Vector u{0.3f, -0.2f, 1.0f};
    Vector phat = predict_distribution(u, p);
    for (float v : phat) CHECK(v == doctest::Approx(0.2f));
  }

  SUBCASE("zero O gives the uniform distribution") {
    p.O.fill(0.0f);
    Vector phat = predict_distribution({0.3f, -0.2f, 1.0f}, p);
    for (float v : phat) CHECK(v == doctest::Approx(0.2f));
  }
}

TEST_CASE("predict_distribution matches the d=1 |V|=2 closed form") {
  Rng rng(7);
  ModelParams p = ModelParams::init(2, 1, 1, rng);
  p.Wo.at(0, 0) = 1.0f;
  p.O.at(0, 0) = std::log(2.0f);
  p.O.at(1, 0) = 0.0f;
  Vector phat = predict_distribution({1.0f}, p);
  CHECK(phat[0] == doctest::Approx(2.0 / 3.0));
  CHECK(phat[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("predict_distribution sums to one across random draws") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int d = 1 + static_cast<int>(rng.below(16));
    const int vocab = 2 + static_cast<int>(rng.below(60));
    ModelParams p = ModelParams::init(vocab, d, 1, rng);
    Vector u(d);
    for (float& x : u) x = rng.normal();
    Vector phat = predict_distribution(u, p);
    double sum = 0.0;
    for (float v : phat) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-5);
  }
}

TEST_CASE("target_distribution closed forms") {
  Vector p1 = target_distribution({{0, 1}, {1, 1}}, 4);
  CHECK(p1[0] == doctest::Approx(0.5));
  CHECK(p1[1] == doctest::Approx(0.5));
  CHECK(p1[2] == 0.0f);
  CHECK(p1[3] == 0.0f);

  // ln4 = 2 ln2, so {a:3, b:1} normalizes to exactly (2/3, 1/3).
  Vector p2 = target_distribution({{0, 3}, {1, 1}}, 2);
  CHECK(std::abs(p2[0] - 2.0 / 3.0) < 1e-7);
  CHECK(std::abs(p2[1] - 1.0 / 3.0) < 1e-7);

  Vector p3 = target_distribution({{2, 1}}, 3);
  CHECK(p3[2] == doctest::Approx(1.0));

  CHECK_THROWS_AS(target_distribution({}, 3), std::invalid_argument);
  CHECK_THROWS_AS(target_distribution({{0, 0}}, 3), std::invalid_argument);
  CHECK_THROWS_AS(target_distribution({{5, 1}}, 3), std::invalid_argument);
}

TEST_CASE("target_distribution log base cancels after normalization") {
  // Any log base rescales numerator and denominator alike.
  const std::map<int, int> counts{{0, 7}, {2, 1}, {3, 19}};
  Vector nat = target_distribution(counts, 5);
  for (const auto& [id, c] : counts) {
    double denom = 0.0;
    for (const auto& [jd, jc] : counts) denom += std::log10(1.0 + jc);
    CHECK(nat[id] == doctest::Approx(std::log10(1.0 + c) / denom).epsilon(1e-6));
  }
}

TEST_CASE("consistency_loss closed forms and entropy bound") {
  const double ln2 = std::log(2.0);
  CHECK(consistency_loss({0.5f, 0.5f}, {0.5f, 0.5f}) == doctest::Approx(ln2));
  CHECK(consistency_loss({1.0f, 0.0f}, {0.5f, 0.5f}) == doctest::Approx(ln2));
  Vector quarter(4, 0.25f);
  CHECK(consistency_loss(quarter, quarter) == doctest::Approx(std::log(4.0)));

  // Bound: loss >= -sum p ln p, with equality iff p_hat == p.
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(20));
    Vector a(n), b(n);
    for (float& x : a) x = static_cast<float>(rng.uniform()) + 1e-3f;
    for (float& x : b) x = static_cast<float>(rng.uniform()) + 1e-3f;
    float sa = 0.0f, sb = 0.0f;
    for (float x : a) sa += x;
    for (float x : b) sb += x;
    for (float& x : a) x /= sa;
    for (float& x : b) x /= sb;
    CHECK(consistency_loss(a, b) >= entropy_bound(a) - 1e-6);
  }
}

TEST_CASE("forward_loss per-hop breakdown and N=1 degeneracy") {
  TrainingSample s = random_sample(12, 3, 4, 21);
  ModelParams p1 = tiny_params(12, 6, 1, 22);
  LossBreakdown l1 = forward_loss(s, p1);
  REQUIRE(l1.per_hop.size() == 1);
  CHECK(l1.total == doctest::Approx(l1.per_hop[0]));

  ModelParams p3 = tiny_params(12, 6, 3, 22);
  LossBreakdown l3 = forward_loss(s, p3);
  REQUIRE(l3.per_hop.size() == 3);
  double mean = (l3.per_hop[0] + l3.per_hop[1] + l3.per_hop[2]) / 3.0;
  CHECK(l3.total == doctest::Approx(mean));

  Vector p = target_distribution(s.target_counts, 12);
  for (double lh : l3.per_hop) CHECK(lh >= entropy_bound(p) - 1e-6);
}

TEST_CASE("forward_backward loss equals forward_loss") {
  TrainingSample s = random_sample(20, 4, 5, 31);
  for (Variant v : {Variant::SUMN, Variant::MEAN, Variant::MAX}) {
    ModelParams p = tiny_params(20, 8, 2, 32);
    ModelParams g = ModelParams::zeros_like(p);
    LossBreakdown with_grads = forward_backward(s, p, g, v);
    LossBreakdown plain = forward_loss(s, p, v);
    CHECK(with_grads.total == plain.total);
  }
}

TEST_CASE("full-model gradients match finite differences on the tiny instance") {
  // d=8, |V|=50, N=2, |S|=3, targets over 5 words. The difference quotient
  // runs through the double-precision reference forward; a zero_floor of
  // 1e-4 keeps directions with an identically-zero true gradient (uniform
  // attention-logit shifts) from being scored against float noise.
  ModelParams p = tiny_params(50, 8, 2, 57);
  Rng rng(58);
  TrainingSample s;
  s.user_id = "u";
  s.history = {{3, 17, 29}, {7}, {44, 8}};
  for (int i = 0; i < 5; ++i) {
    s.target_counts[static_cast<int>(rng.below(50))] += 1 + static_cast<int>(rng.below(4));
  }

  // The instance must sit clear of every ReLU kink, or central differences
  // measure the wrong one-sided slope.
  HopTrace tr = aggregate(embed_behaviors(s.history, p), p);
  for (const auto& u : tr.users) {
    Vector z = linear(p.Wo, u);
    for (float v : z) REQUIRE(std::abs(v) > 0.02f);
  }

  ModelParams grads = ModelParams::zeros_like(p);
  forward_backward(s, p, grads);
  auto loss_fn = [&]() { return reference_loss(s, p); };

  auto params = p.tensors();
  auto gview = grads.tensors();
  for (size_t i = 0; i < params.size(); ++i) {
    const double err =
        finite_diff_check(loss_fn, params[i].second,
                          std::span<const float>(gview[i].second), 1e-3f, SIZE_MAX, 0, 1e-4);
    INFO("tensor ", params[i].first);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("MEAN and MAX variant gradients match finite differences") {
  ModelParams p = tiny_params(30, 6, 1, 51);
  TrainingSample s = random_sample(30, 4, 5, 52);
  for (Variant v : {Variant::MEAN, Variant::MAX}) {
    ModelParams grads = ModelParams::zeros_like(p);
    forward_backward(s, p, grads, v);
    auto loss_fn = [&]() { return reference_loss(s, p, v); };
    auto params = p.tensors();
    auto gview = grads.tensors();
    for (size_t i = 0; i < params.size(); ++i) {
      // Keys and the initial memory are outside the MEAN/MAX dataflow.
      const auto& name = params[i].first;
      if (name == "Wk" || name == "lnk_gain" || name == "lnk_bias" || name == "m0") {
        for (float g : gview[i].second) CHECK(g == 0.0f);
        continue;
      }
      const double err = finite_diff_check(loss_fn, params[i].second,
                                           std::span<const float>(gview[i].second), 1e-3f,
                                           SIZE_MAX, 0, 1e-4);
      INFO("variant ", variant_name(v), " tensor ", name);
      CHECK(err < 1e-3);
    }
  }
}

TEST_CASE("reference forward agrees with the production forward") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ModelParams p = tiny_params(25, 6, 3, seed + 300);
    TrainingSample s = random_sample(25, 3, 4, seed + 400);
    for (Variant v : {Variant::SUMN, Variant::MEAN, Variant::MAX}) {
      CHECK(std::abs(reference_loss(s, p, v) - forward_loss(s, p, v).total) < 1e-5);
    }
  }
}

TEST_CASE("AE mode can overfit a one-word user toward the entropy bound") {
  // T = S on a single-behavior user; the bound is 0 (one-point distribution).
  TrainingSample s;
  s.user_id = "u";
  s.history = {{2}};
  s.target_counts = target_counts(s.history);
  ModelParams p = tiny_params(10, 8, 2, 61);

  AdamConfig cfg;
  cfg.lr = 0.05f;
  std::vector<AdamState> states;
  for (auto& [name, span] : p.tensors()) states.emplace_back(span.size());
  double last = 0.0;
  for (int step = 0; step < 300; ++step) {
    ModelParams grads = ModelParams::zeros_like(p);
    last = forward_backward(s, p, grads).total;
    auto params = p.tensors();
    auto gview = grads.tensors();
    for (size_t i = 0; i < params.size(); ++i) {
      adam_step(params[i].second, std::span<const float>(gview[i].second), states[i], cfg);
    }
  }
  CHECK(last < 0.05);
}

TEST_CASE("infer is deterministic, set-invariant, and definitionally consistent") {
  ModelParams p = tiny_params(15, 8, 3, 71);
  const std::vector<std::vector<int>> hist{{1, 2}, {3, 4, 5}, {6}};

  Vector a = infer(hist, p);
  Vector b = infer(hist, p);
  CHECK(a == b);  // bit-identical

  // Permuting behaviors and words within a behavior.
  Vector c = infer({{6}, {1, 2}, {5, 3, 4}}, p);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(c[i] == doctest::Approx(a[i]).epsilon(1e-5));
  }

  HopTrace tr = aggregate(embed_behaviors(hist, p), p);
  CHECK(a == tr.users.back());

  CHECK_THROWS_AS(infer({}, p), std::invalid_argument);
}

TEST_CASE("MEAN variant ignores the initial memory") {
  ModelParams p = tiny_params(15, 6, 2, 81);
  const std::vector<std::vector<int>> hist{{1, 2}, {3}};
  Vector before = infer(hist, p, Variant::MEAN);
  for (float& x : p.m0) x += 10.0f;
  Vector after = infer(hist, p, Variant::MEAN);
  CHECK(before == after);
}

TEST_CASE("MAX variant with a single behavior reduces to LN(v1)") {
  ModelParams p = tiny_params(15, 6, 2, 91);
  const std::vector<std::vector<int>> hist{{4, 9}};
  Matrix E = embed_behaviors(hist, p);
  Vector v1 = layer_norm(linear(p.Wv, Vector(E.row(0), E.row(0) + 6)), p.lnv_gain,
                         p.lnv_bias);
  Vector expected = layer_norm(v1, p.lnu_gain, p.lnu_bias);
  Vector got = infer(hist, p, Variant::MAX);
  for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]));
}

TEST_CASE("variant parsing round trip") {
  for (Variant v : {Variant::SUMN, Variant::AE, Variant::MEAN, Variant::MAX}) {
    CHECK(parse_variant(variant_name(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("bogus"), std::invalid_argument);
}
