// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "moerob/errors.hpp"
#include "moerob/metrics.hpp"
#include "moerob/smooth_moe.hpp"
#include "oracles.hpp"

using namespace moerob;
using moerob::testing::central_difference;

namespace {

SmoothMoE boundary_model(double c1, double c2) {
  SmoothMoE m;
  m.router.routing_params = Matrix(2, 2);
  m.router.routing_params << 1, 0, -1, 0;
  m.experts = {LinearExpert{Vector::Zero(2), c1}, LinearExpert{Vector::Zero(2), c2}};
  return m;
}

}  // namespace

TEST_SUITE("smooth_moe") {

TEST_CASE("routing probabilities") {
  SoftmaxRouter same{Matrix::Ones(4, 3)};
  CHECK((routing_probs(same, Vector::Random(3)) - Vector::Constant(4, 0.25)).norm() < 1e-15);

  const SmoothMoE m = boundary_model(0, 0);
  CHECK((routing_probs(m.router, Vector::Zero(2)) - Vector::Constant(2, 0.5)).norm() < 1e-15);
  const Vector p = routing_probs(m.router, (Vector(2) << 10, 0).finished());
  CHECK(p(0) == doctest::Approx(1.0 / (1.0 + std::exp(-20.0))).epsilon(1e-15));

  // overflow-safe
  const Vector q = softmax((Vector(3) << 1000, 999, -1000).finished());
  CHECK(q.allFinite());
  CHECK(std::abs(q.sum() - 1.0) < 1e-12);
}

TEST_CASE("probabilities sum to one and ignore a common logit offset") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Vector z = moerob::testing::random_vector(5, rng, 10.0);
    const Vector p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((softmax((z.array() + 3.7).matrix()) - p).norm() < 1e-12);
  }
}

TEST_CASE("forward") {
  SmoothMoE same = random_smooth_moe(3, 4, 1.0, 2);
  for (auto& e : same.experts) e = same.experts[0];
  const Vector x = Vector::LinSpaced(4, -1, 1);
  CHECK(forward(same, x) == doctest::Approx(same.experts[0](x)));

  CHECK(forward(boundary_model(2.0, 6.0), Vector::Zero(2)) == doctest::Approx(4.0));

  const SmoothMoE one = random_smooth_moe(1, 4, 1.0, 3);
  CHECK(forward(one, x) == doctest::Approx(one.experts[0](x)));
  CHECK((input_gradient(one, x) - one.experts[0].weights).norm() < 1e-15);
  CHECK((input_gradient(same, x) - same.experts[0].weights).norm() < 1e-12);
}

TEST_CASE("input gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SmoothMoE m = random_smooth_moe(3, 4, 1.0, seed);
    std::mt19937_64 rng(seed);
    for (int t = 0; t < 50; ++t) {
      const Vector x = moerob::testing::random_vector(4, rng, 2.0);
      const Vector g = input_gradient(m, x);
      const Vector fd = central_difference([&](const Vector& v) { return forward(m, v); }, x);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("lemma 1 on the two-expert boundary") {
  for (double c1 : {-1.0, 0.5, 3.0}) {
    const SmoothMoE m = boundary_model(c1, 2.0);
    const Lemma1Report r = lemma1_pointwise(m, Vector::Zero(2));
    const Vector s1 = m.router.routing_params.row(0).transpose(), s2 = m.router.routing_params.row(1).transpose();
    CHECK(std::abs(r.router_term - std::abs(c1 - 2.0) * (s1 - s2).norm() / 4.0) < 1e-9);
    CHECK(std::abs(r.router_term - (0.25 * (c1 - 2.0) * (s1 - s2)).norm()) < 1e-9);
    CHECK(r.bound == doctest::Approx(r.expert_term + r.router_term));
  }
}

TEST_CASE("saturated routing kills the router term") {
  const SmoothMoE m = boundary_model(1.0, 5.0);
  // logit gap 2 * 20 = 40
  CHECK(lemma1_pointwise(m, (Vector(2) << 20, 0).finished()).router_term <= 1e-6);
}

TEST_CASE("identical experts cancel the router term") {
  SmoothMoE m = random_smooth_moe(4, 3, 1.0, 8);
  for (auto& e : m.experts) e = m.experts[1];
  const Lemma1Report r = lemma1_pointwise(m, Vector::Ones(3));
  CHECK(r.router_term < 1e-12);
  CHECK(r.grad_norm == doctest::Approx(m.experts[1].weights.norm()));
}

TEST_CASE("gradient norm never exceeds the pointwise bound") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SmoothMoE m = random_smooth_moe(1 + static_cast<int>(seed % 5), 3, 1.5, seed);
    for (const Vector& x : sample_box({Vector(), 5.0}, 3, 1000, seed + 99)) {
      const Lemma1Report r = lemma1_pointwise(m, x);
      CHECK(r.grad_norm <= r.bound + 1e-9);
    }
  }
}

TEST_CASE("global bound") {
  const SmoothMoE one = random_smooth_moe(1, 3, 1.0, 2);
  const auto g1 = lemma1_global(one, {Vector(), 5.0}, 100, 1);
  CHECK(g1.global_bound == one.experts[0].weights.norm());

  const SmoothMoE m = random_smooth_moe(3, 3, 1.0, 5);
  const auto g = lemma1_global(m, {Vector(), 5.0}, 500, 4);
  for (double b : g.pointwise_bounds) CHECK(b <= g.global_bound + 1e-12);
  CHECK_THROWS_AS(lemma1_global(m, {Vector(), 5.0}, 0, 4), ContractError);
}

TEST_CASE("sup estimate matches a dense grid for constant experts") {
  SmoothMoE m;
  m.router.routing_params = Matrix(2, 2);
  m.router.routing_params << 0.8, -0.3, -0.5, 0.6;
  m.experts = {LinearExpert{Vector::Zero(2), 1.5}, LinearExpert{Vector::Zero(2), -0.7}};
  const double radius = 1.0;
  double grid = 0.0;
  for (double a = -radius; a <= radius + 1e-12; a += 0.01) {
    for (double b = -radius; b <= radius + 1e-12; b += 0.01) {
      grid = std::max(grid, lemma1_pointwise(m, (Vector(2) << a, b).finished()).router_term);
    }
  }
  const auto g = lemma1_global(m, {Vector(), radius}, 20000, 9);
  CHECK(g.sup_router_term <= grid * (1 + 1e-9) + 1e-12);
  CHECK(std::abs(g.sup_router_term - grid) <= 0.05 * grid);
}

TEST_CASE("empirical Lipschitz never exceeds the global bound") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SmoothMoE m = random_smooth_moe(3, 3, 1.0, seed);
    // true sup over the box is at least the sampled one; use a generous sample for the bound
    const auto g = lemma1_global(m, {Vector(), 6.0}, 4000, seed);
    const auto pairs = random_point_pairs(3, 2000, 5.0, 0.05, seed + 7);
    const auto est = empirical_lipschitz([&](const Vector& x) { return forward(m, x); }, pairs);
    // pairs stay inside the radius-6 box, so every chord is bounded by the gradient bound along it
    CHECK(est.value <= g.global_bound);
  }
}

TEST_CASE("model validation") {
  SmoothMoE m = random_smooth_moe(2, 3, 1.0, 1);
  m.experts.pop_back();
  CHECK_THROWS_AS(m.validate(), ContractError);
  CHECK_THROWS_AS(routing_probs(random_smooth_moe(2, 3, 1.0, 1).router, Vector::Zero(4)), ContractError);
}

}  // TEST_SUITE
