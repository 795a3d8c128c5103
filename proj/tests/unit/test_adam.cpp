#include <doctest.h>

#include <cmath>

#include "sumn/adam.hpp"

using namespace sumn;

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  Vector p{1.0f, -2.0f, 0.5f};
  Vector g(3, 0.0f);
  AdamState st(3);
  AdamConfig cfg;
  const Vector before = p;
  for (int i = 0; i < 5; ++i) {
    adam_step(std::span<float>(p), std::span<const float>(g), st, cfg);
  }
  CHECK(p == before);
  CHECK(st.t == 5);
}

TEST_CASE("adam first step approaches -lr * sign(g)") {
  // With bias correction, step one moves by lr * g / (|g| + eps').
  for (float g0 : {0.5f, -3.0f, 1e-3f}) {
    Vector p{0.0f};
    Vector g{g0};
    AdamState st(1);
    AdamConfig cfg;
    adam_step(std::span<float>(p), std::span<const float>(g), st, cfg);
    CHECK(p[0] == doctest::Approx(-cfg.lr * (g0 > 0 ? 1.0f : -1.0f)).epsilon(1e-4));
  }
}

TEST_CASE("adam three-step scalar sequence matches hand-evaluated recurrences") {
  // Frozen from evaluating the update rule by hand in double precision:
  // p0=1, g=0.5 each step, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8.
  Vector p{1.0f};
  Vector g{0.5f};
  AdamState st(1);
  AdamConfig cfg;
  cfg.lr = 0.1f;
  const double expected[3] = {0.900000002, 0.800000004, 0.700000006};
  for (int t = 0; t < 3; ++t) {
    adam_step(std::span<float>(p), std::span<const float>(g), st, cfg);
    CHECK(std::abs(p[0] - expected[t]) < 1e-6);
  }
}

TEST_CASE("adam with lr=0 is bit-identical") {
  Rng rng(5);
  Vector p(16), g(16);
  for (float& v : p) v = rng.normal();
  for (float& v : g) v = rng.normal();
  const Vector before = p;
  AdamState st(16);
  AdamConfig cfg;
  cfg.lr = 0.0f;
  for (int i = 0; i < 10; ++i) {
    adam_step(std::span<float>(p), std::span<const float>(g), st, cfg);
  }
  CHECK(p == before);
}

TEST_CASE("adam rejects bad shapes and betas") {
  Vector p{1.0f, 2.0f};
  Vector g{1.0f};
  AdamState st(2);
  AdamConfig cfg;
  CHECK_THROWS_AS(adam_step(std::span<float>(p), std::span<const float>(g), st, cfg),
                  std::invalid_argument);
  Vector g2{1.0f, 1.0f};
  cfg.beta1 = 1.0f;
  CHECK_THROWS_AS(adam_step(std::span<float>(p), std::span<const float>(g2), st, cfg),
                  std::invalid_argument);
}
