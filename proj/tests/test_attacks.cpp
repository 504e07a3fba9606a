// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "moerob/attacks.hpp"
#include "moerob/errors.hpp"
#include "moerob/metrics.hpp"
#include "moerob/rng.hpp"

using namespace moerob;

namespace {

// squared loss of the linear scalar model <w, x> against target y
Objective squared_loss(const Vector& w, double y) {
  return [w, y](const Vector& x, Vector* g, bool* mis) {
    const double r = w.dot(x) - y;
    if (g) *g = 2.0 * r * w;
    if (mis) *mis = false;
    return r * r;
  };
}

struct Trained {
  SparseMoE model;
  LabeledDataset data;
};

const Trained& trained_model() {
  static const Trained t = [] {
    SparseMoeShape s;
    s.dim = 6;
    s.num_experts = 4;
    s.k = 2;
    s.hidden = 8;
    s.num_classes = 3;
    Trained out{init_sparse_moe(s, 5), gen_cluster_classification(3, 20, 6, 1.0, 5, 0.8)};
    train(out.model, out.data, TrainConfig{150, 0.1, 0, {}}, 5);
    return out;
  }();
  return t;
}

}  // namespace

TEST_SUITE("attacks") {

TEST_CASE("fgsm on a hand-derivable objective") {
  const Vector w = (Vector(2) << 1, -1).finished();
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  const Vector adv = fgsm(squared_loss(w, -1.0), Vector::Zero(2), cfg);
  CHECK((adv - (Vector(2) << 0.3, -0.3).finished()).norm() < 1e-15);

  cfg.epsilon = 0.0;
  CHECK(fgsm(squared_loss(w, -1.0), Vector::Ones(2), cfg) == Vector::Ones(2));

  // flat coordinate stays put
  cfg.epsilon = 0.5;
  const Vector flat = fgsm(squared_loss((Vector(2) << 1, 0).finished(), -1.0), Vector::Zero(2), cfg);
  CHECK(flat(0) == 0.5);
  CHECK(flat(1) == 0.0);

  cfg.epsilon = -1.0;
  CHECK_THROWS_AS(fgsm(squared_loss(w, 0.0), Vector::Zero(2), cfg), ContractError);
}

TEST_CASE("pgd reduces to fgsm with one full step") {
  const Vector w = (Vector(3) << 0.5, -2, 1).finished();
  const Vector x = (Vector(3) << 0.1, 0.2, -0.3).finished();
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  cfg.steps = 1;
  cfg.step_size = 0.2;
  cfg.track_best_iterate = false;
  CHECK(pgd(squared_loss(w, 1.0), x, cfg).point == fgsm(squared_loss(w, 1.0), x, cfg));
}

TEST_CASE("pgd basics") {
  const Vector w = (Vector(2) << 1, 2).finished();
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  const AscentResult zero = pgd(squared_loss(w, 0.5), Vector::Ones(2), cfg);
  CHECK(zero.point == Vector::Ones(2));
  CHECK(zero.loss == zero.start_loss);

  cfg.epsilon = 0.25;
  const AscentResult r = pgd(squared_loss(w, 0.5), Vector::Ones(2), cfg);
  CHECK(r.loss >= r.start_loss);
  CHECK((r.point - Vector::Ones(2)).lpNorm<Eigen::Infinity>() <= 0.25 + 1e-12);
  CHECK(cfg.effective_step_size() == doctest::Approx(0.25 / 40));

  // clipping to an input box
  cfg.clip_min = 0.0;
  cfg.clip_max = 1.1;
  const AscentResult c = pgd(squared_loss(w, 0.5), Vector::Ones(2), cfg);
  CHECK(c.point.maxCoeff() <= 1.1);

  const Objective broken = [](const Vector& x, Vector* g, bool*) {
    if (g) *g = Vector::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
    return 0.0;
  };
  cfg.clip_min.reset();
  cfg.clip_max.reset();
  CHECK_THROWS_AS(pgd(broken, Vector::Zero(2), cfg), AttackFailure);
}

TEST_CASE("attacks on a trained sparse model") {
  const auto& t = trained_model();
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  for (Eigen::Index i = 0; i < t.data.rows(); ++i) {
    const Vector x = t.data.x.row(i).transpose();
    const Vector y = t.data.labels.row(i).transpose();
    Rng r1(i), r2(i);
    const AttackRow best = pgd(t.model, x, y, cfg, r1);
    CHECK((best.perturbed - x).lpNorm<Eigen::Infinity>() <= cfg.epsilon + 1e-12);
    CHECK(best.achieved_loss >= best.clean_loss);

    Rng r3(i);
    const std::uint64_t tie = r3();
    const Vector f = fgsm(t.model, x, y, cfg, tie);
    const double fl = attack_objective(t.model, f, y, cfg, tie);
    CHECK(best.achieved_loss >= fl);

    // determinism
    const AttackRow again = pgd(t.model, x, y, cfg, r2);
    CHECK(again.perturbed == best.perturbed);
    CHECK(again.achieved_loss == best.achieved_loss);
  }
}

TEST_CASE("aux objective with zero weight equals cross-entropy") {
  const auto& t = trained_model();
  AttackConfig ce;
  ce.epsilon = 0.1;
  AttackConfig aux = ce;
  aux.objective = AttackObjective::CrossEntropyPlusAux;
  aux.aux_weight = 0.0;
  for (Eigen::Index i = 0; i < 10; ++i) {
    Rng a(i), b(i);
    const Vector x = t.data.x.row(i).transpose();
    const Vector y = t.data.labels.row(i).transpose();
    const AttackRow p = pgd(t.model, x, y, ce, a);
    const AttackRow q = pgd(t.model, x, y, aux, b);
    CHECK(p.perturbed == q.perturbed);
    CHECK(p.achieved_loss == q.achieved_loss);
  }
  aux.aux_weight = 0.005;
  Vector g1, g2;
  const Vector x = t.data.x.row(0).transpose();
  const Vector y = t.data.labels.row(0).transpose();
  const double l1 = attack_objective(t.model, x, y, ce, 3, &g1);
  const double l2 = attack_objective(t.model, x, y, aux, 3, &g2);
  CHECK(l2 >= l1);
}

TEST_CASE("sweep with only epsilon zero reproduces clean evaluation") {
  const auto& t = trained_model();
  const SweepResult s = evaluate_under_attack(t.model, t.data, {0.0}, AttackConfig{}, 9);
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].adv_error == s.rows[0].clean_error);
  CHECK(s.rows[0].routing_change[0] == 0.0);
  const double clean = 1.0 - precision_at_1(predict_logits(t.model, t.data.x), t.data.labels).precision_at_1;
  CHECK(s.rows[0].clean_error == doctest::Approx(clean));
}

TEST_CASE("sweep is monotone and feasible") {
  const auto& t = trained_model();
  const std::vector<double> grid{0.0, 0.05, 0.1, 0.3, 0.6, 1.0};
  const SweepResult s = evaluate_under_attack(t.model, t.data, grid, AttackConfig{}, 3);
  REQUIRE(s.rows.size() == grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(s.rows[i].max_perturbation <= grid[i] + 1e-12);
    for (double r : s.rows[i].routing_change) {
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
    if (i > 0) {
      CHECK(s.rows[i].adv_error >= s.rows[i - 1].adv_error);
      CHECK(s.rows[i].mean_adv_loss >= s.rows[i - 1].mean_adv_loss);
    }
  }
  CHECK(s.rows.back().adv_error > s.rows.front().adv_error);

  CHECK_THROWS_AS(evaluate_under_attack(t.model, t.data, {0.1, 0.0}, AttackConfig{}, 3), ContractError);
  CHECK_THROWS_AS(evaluate_under_attack(t.model, t.data, {}, AttackConfig{}, 3), ContractError);
}

TEST_CASE("adversarial training with epsilon zero is standard training") {
  SparseMoeShape s;
  s.dim = 4;
  s.num_experts = 3;
  s.k = 2;
  s.hidden = 5;
  s.num_classes = 2;
  const LabeledDataset d = gen_cluster_classification(2, 10, 4, 1.0, 1);
  const TrainConfig tc{20, 0.1, 8, {}};
  SparseMoE a = init_sparse_moe(s, 2), b = init_sparse_moe(s, 2);
  const TrainLog la = train(a, d, tc, 4);
  AttackConfig none;
  none.steps = 10;
  const TrainLog lb = adversarial_train(b, d, tc, none, 4);
  CHECK(la.losses == lb.losses);
  const auto pa = parameter_blocks(std::as_const(a));
  const auto pb = parameter_blocks(std::as_const(b));
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(std::equal(pa[i].begin(), pa[i].end(), pb[i].begin()));
}

}  // TEST_SUITE
