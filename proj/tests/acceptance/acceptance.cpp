// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moerob/attacks.hpp"
#include "moerob/errors.hpp"
#include "moerob/harness.hpp"
#include "moerob/metrics.hpp"
#include "moerob/numeric.hpp"
#include "moerob/rng.hpp"
#include "moerob/routing_theory.hpp"
#include "moerob/smooth_moe.hpp"
#include "moerob/sparse_moe.hpp"
#include "moerob/synth_data.hpp"

using namespace moerob;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- regression theory

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 pick(2024);
  int held = 0;
  double worst = 1e300;
  for (int n = 0; n < 200; ++n) {
    const int experts = std::uniform_int_distribution<int>(1, 4)(pick);
    const int dim = std::uniform_int_distribution<int>(experts, 12)(pick);
    const int rows = std::uniform_int_distribution<int>(1, 3 * dim)(pick);
    const auto inst = gen_random_partitioned_regression(rows, dim, experts, derive_seed(7, static_cast<std::uint64_t>(n)));
    const Theorem1Report r = theorem1_check(inst.dataset, inst.partition);
    worst = std::min(worst, r.slack);
    if (r.holds && r.slack >= -1e-9) ++held;
  }
  const double secs = seconds_since(t0);
  return {held == 200 && secs < 10.0,
          std::to_string(held) + "/200 hold, min slack " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome criterion2() {
  bool ok = true;
  std::string detail;
  for (int e : {2, 4, 8}) {
    OrthogonalRegressionOptions opts;
    opts.unit_norm_weights = true;
    const auto g = gen_orthogonal_regression(e, 2 * e, 2 * e, 0.0, 100 + static_cast<std::uint64_t>(e), opts);
    const Theorem1Report r = theorem1_check(g.dataset, g.partition);
    double max_ratio = 0.0;
    for (const auto& w : r.solutions.expert_weights) max_ratio = std::max(max_ratio, w.norm());
    max_ratio /= r.solutions.dense_weights.norm();
    const double err = std::abs(max_ratio - 1.0 / std::sqrt(e));
    ok = ok && err <= 1e-6 && r.metrics.eps1 <= 1e-10 && r.metrics.eps2 <= 1e-10;
    detail += "E=" + std::to_string(e) + " ratio err " + fmt(err) + " eps1 " + fmt(r.metrics.eps1) + " eps2 " +
              fmt(r.metrics.eps2) + "; ";
  }
  return {ok, detail};
}

Outcome criterion3() {
  bool ok = true;
  double worst_dense = 0.0, worst_expert = 1e300;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = gen_antialigned_pair(6, 4, s);
    const SolutionSet sol = solve_all(p.dataset, p.partition);
    double min_expert = 1e300;
    for (const auto& w : sol.expert_weights) min_expert = std::min(min_expert, w.norm());
    worst_dense = std::max(worst_dense, sol.dense_weights.norm());
    worst_expert = std::min(worst_expert, min_expert);
    ok = ok && sol.dense_weights.norm() <= 1e-10 && min_expert > 0.1;
  }
  return {ok, "max ||w*|| " + fmt(worst_dense) + ", min expert norm " + fmt(worst_expert)};
}

// Separated instances with enough experts that the sufficient condition can bite; instances
// whose draw misses the condition are skipped, as the check only constrains the conclusion.
Outcome criterion4() {
  const std::vector<double> gammas{0.25, 0.5, 0.9};
  int accepted = 0, concluded = 0, tried = 0;
  double worst_identity = 0.0;
  std::string failure;
  for (std::uint64_t s = 0; accepted < 50 && tried < 20000; ++s, ++tried) {
    const double gamma = gammas[static_cast<std::size_t>(accepted) % gammas.size()];
    const auto inst = gen_separated_instance(12, 12, 24, 0.05, 0.01, derive_seed(44, s));
    try {
      const Theorem2Report r = theorem2_check(inst.dataset, inst.partition, inst.betas, gamma);
      if (!r.condition_holds) continue;
      ++accepted;
      worst_identity = std::max(worst_identity, r.identity_residual);
      if (r.conclusion_holds) ++concluded;
    } catch (const NumericalFailure& e) {
      ++accepted;
      failure = e.what();
    }
  }
  const bool ok = accepted == 50 && concluded == 50 && worst_identity <= 1e-9;
  return {ok, std::to_string(concluded) + "/" + std::to_string(accepted) + " conclusions hold (" + std::to_string(tried) +
                  " draws), identity residual " + fmt(worst_identity) + (failure.empty() ? "" : ", " + failure)};
}

// ---------------------------------------------------------------- smooth mixture

Outcome criterion5() {
  int violations = 0;
  double worst_fd = 0.0;
  for (std::uint64_t m = 0; m < 20; ++m) {
    const int experts = 2 + static_cast<int>(m % 4);
    const int dim = 2 + static_cast<int>(m % 5);
    const SmoothMoE model = random_smooth_moe(experts, dim, 1.0, derive_seed(5, m));
    for (const Vector& x : sample_box(BoxDomain{Vector::Zero(dim), 3.0}, dim, 1000, derive_seed(6, m))) {
      try {
        lemma1_pointwise(model, x);
      } catch (const NumericalFailure&) {
        ++violations;
      }
      const Vector g = input_gradient(model, x);
      Vector fd(dim);
      for (int c = 0; c < dim; ++c) {
        const double h = 1e-5 * std::max(1.0, std::abs(x(c)));
        Vector up = x, down = x;
        up(c) += h;
        down(c) -= h;
        fd(c) = (forward(model, up) - forward(model, down)) / (2 * h);
      }
      const double scale = std::max(g.norm(), 1e-8);
      worst_fd = std::max(worst_fd, (fd - g).norm() / scale);
    }
  }

  // two experts, points on the routing boundary <s_1 - s_2, x> = 0
  double worst_boundary = 0.0;
  for (std::uint64_t m = 0; m < 20; ++m) {
    const SmoothMoE model = random_smooth_moe(2, 3, 1.0, derive_seed(8, m));
    const Vector ds = (model.router.routing_params.row(0) - model.router.routing_params.row(1)).transpose();
    for (Vector x : sample_box(BoxDomain{Vector::Zero(3), 2.0}, 3, 50, derive_seed(9, m))) {
      x -= (ds.dot(x) / ds.squaredNorm()) * ds;
      const Lemma1Report r = lemma1_pointwise(model, x);
      const double expect = (0.25 * (model.experts[0](x) - model.experts[1](x)) * ds).norm();
      worst_boundary = std::max(worst_boundary, std::abs(r.router_term - expect));
    }
  }
  const bool ok = violations == 0 && worst_fd <= 1e-5 && worst_boundary <= 1e-9;
  return {ok, std::to_string(violations) + " bound violations over 20000 points, worst FD rel err " + fmt(worst_fd) +
                  ", boundary formula err " + fmt(worst_boundary)};
}

// ---------------------------------------------------------------- sparse model pieces

Outcome criterion6() {
  // balanced-symmetric: each expert sees the same multiset of logits
  const Matrix probs = (Matrix(3, 3) << 0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.2, 0.5).finished();
  const Matrix clean = (Matrix(2, 2) << 1.0, 0.0, 0.0, 1.0).finished();
  const Matrix noisy = (Matrix(2, 2) << 1.2, -0.1, -0.1, 1.2).finished();
  const double imp = importance_loss(probs);
  const double load = load_loss(clean, noisy, 1, 0.5);
  const double one_hot = importance_loss((Matrix(1, 2) << 1.0, 0.0).finished());

  std::mt19937_64 rng(606);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double sigma = 0.3;
  Matrix c(4, 5), z(4, 5);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    c(i) = 0.4 * unit(rng);
    z(i) = c(i) + sigma * unit(rng);
  }
  const int k = 2;
  const Matrix pi = load_probabilities(c, z, k, sigma);
  double worst_mc = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    std::vector<double> v(static_cast<std::size_t>(c.cols()));
    for (Eigen::Index j = 0; j < c.cols(); ++j) v[static_cast<std::size_t>(j)] = z(i, j);
    std::sort(v.begin(), v.end(), std::greater<>());
    const double tau = v[k - 1];
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const int draws = 100000;
      int hits = 0;
      for (int t = 0; t < draws; ++t) hits += (c(i, j) + sigma * unit(rng) >= tau) ? 1 : 0;
      worst_mc = std::max(worst_mc, std::abs(hits / static_cast<double>(draws) - pi(i, j)));
    }
  }
  const bool ok = std::abs(imp) <= 1e-9 && std::abs(load) <= 1e-9 && std::abs(one_hot - 1.0) <= 1e-12 && worst_mc <= 0.01;
  return {ok, "importance " + fmt(imp) + ", load " + fmt(load) + ", one-hot importance " + fmt(one_hot) +
                  ", worst MC gap " + fmt(worst_mc)};
}

// Desk-scale model shared by criteria 7, 9 and 10.
Config desk_config() {
  Config c;
  c.general.scenario = "attack-sweep";
  c.general.seed = 1;
  c.data.train_rows_per_class = 64;
  c.data.test_rows_per_class = 32;
  c.data.separation = 1.0;
  c.data.cluster_std = 1.0;
  c.model.dim = 16;
  c.model.experts = 8;
  c.model.k = 2;
  c.model.hidden = 16;
  c.model.classes = 4;
  c.train.steps = 300;
  c.attack.epsilon_grid = {0.0, 0.01, 0.03, 0.1, 0.3};
  return c;
}

struct Desk {
  Config cfg;
  ClusterSplit split;
  SparseMoE model;
};

const Desk& desk() {
  static const Desk d = [] {
    Desk out{desk_config(), {}, {}};
    out.split = make_cluster_split(out.cfg);
    out.model = train_model(out.cfg, model_shape(out.cfg.model), out.split.train);
    return out;
  }();
  return d;
}

Outcome criterion7() {
  const auto t0 = Clock::now();
  const Desk& d = desk();
  const LabeledDataset& test = d.split.test;
  AttackConfig base = attack_config(d.cfg);
  double worst_excess = -1e300;
  int pgd_below_fgsm = 0, fgsm_below_clean = 0, checked = 0;
  for (double eps : d.cfg.attack.epsilon_grid) {
    AttackConfig a = base;
    a.epsilon = eps;
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const Vector x = test.x.row(i).transpose();
      const Vector y = test.labels.row(i).transpose();
      Rng rng(derive_seed(77, static_cast<std::uint64_t>(i)));
      Rng probe = rng;
      const std::uint64_t tie = probe();
      const AttackRow best = pgd(d.model, x, y, a, rng);
      const double fgsm_loss = attack_objective(d.model, fgsm(d.model, x, y, a, tie), y, a, tie);
      worst_excess = std::max(worst_excess, (best.perturbed - x).lpNorm<Eigen::Infinity>() - eps);
      if (best.achieved_loss < fgsm_loss) ++pgd_below_fgsm;
      if (fgsm_loss < best.clean_loss) ++fgsm_below_clean;
      ++checked;
    }
  }
  const SweepResult sweep = evaluate_under_attack(d.model, test, d.cfg.attack.epsilon_grid, base, 78);
  bool monotone = true;
  std::string errors;
  for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
    if (i > 0 && sweep.rows[i].adv_error < sweep.rows[i - 1].adv_error) monotone = false;
    errors += fmt(sweep.rows[i].adv_error) + (i + 1 < sweep.rows.size() ? "," : "");
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_excess <= 1e-12 && pgd_below_fgsm == 0 && fgsm_below_clean == 0 && monotone && secs < 120.0;
  return {ok, std::to_string(checked) + " attacks, max ||z||-eps " + fmt(worst_excess) + ", PGD<FGSM " +
                  std::to_string(pgd_below_fgsm) + ", FGSM<clean " + std::to_string(fgsm_below_clean) +
                  ", adv error [" + errors + "], " + fmt(secs) + " s (incl. training)"};
}

// Five paired seeds; every pair must show the effect.
Outcome criterion8() {
  const double train_eps = 0.5;
  int lower_adv = 0, clean_not_better = 0;
  double std_adv = 0.0, rob_adv = 0.0, std_clean = 0.0, rob_clean = 0.0;
  const int pairs = 5;
  for (int seed = 0; seed < pairs; ++seed) {
    Config cfg = desk_config();
    cfg.general.seed = static_cast<std::uint64_t>(seed);
    cfg.data.cluster_std = 0.7;
    cfg.train.steps = 400;
    cfg.train.batch_size = 64;
    const ClusterSplit split = make_cluster_split(cfg);
    const SparseMoeShape shape = model_shape(cfg.model);
    const SparseMoE standard = train_model(cfg, shape, split.train);
    Config adv_cfg = cfg;
    adv_cfg.train.adversarial_epsilon = train_eps;
    adv_cfg.train.adversarial_steps = 10;
    const SparseMoE robust = train_model(adv_cfg, shape, split.train);

    AttackConfig a = attack_config(cfg);
    a.steps = 10;
    const SweepResult s = evaluate_under_attack(standard, split.test, {0.0, train_eps}, a, 91);
    const SweepResult r = evaluate_under_attack(robust, split.test, {0.0, train_eps}, a, 91);
    if (r.rows[1].adv_error < s.rows[1].adv_error) ++lower_adv;
    if (r.rows[0].clean_error >= s.rows[0].clean_error) ++clean_not_better;
    std_adv += s.rows[1].adv_error / pairs;
    rob_adv += r.rows[1].adv_error / pairs;
    std_clean += s.rows[0].clean_error / pairs;
    rob_clean += r.rows[0].clean_error / pairs;
  }
  const bool ok = lower_adv == pairs && clean_not_better == pairs;
  return {ok, "PGD-10 training at eps " + fmt(train_eps) + ": lower adv error in " + std::to_string(lower_adv) + "/" +
                  std::to_string(pairs) + " pairs (mean " + fmt(std_adv) + " -> " + fmt(rob_adv) +
                  "), clean error not lower in " + std::to_string(clean_not_better) + "/" + std::to_string(pairs) +
                  " (mean " + fmt(std_clean) + " -> " + fmt(rob_clean) + ")"};
}

Outcome criterion9() {
  const Desk& d = desk();
  const SweepResult s =
      evaluate_under_attack(d.model, d.split.test, d.cfg.attack.epsilon_grid, attack_config(d.cfg), 79);
  bool in_range = true;
  for (const auto& row : s.rows)
    for (double v : row.routing_change) in_range = in_range && v >= 0.0 && v <= 1.0;
  const double first = s.rows.front().routing_change.at(0);
  const double last = s.rows.back().routing_change.at(0);
  return {first == 0.0 && last > 0.0 && in_range,
          "routing change " + fmt(first) + " at eps 0, " + fmt(last) + " at eps " + fmt(s.rows.back().epsilon)};
}

Outcome criterion10() {
  const Desk& d = desk();
  AttackConfig ce = attack_config(d.cfg);
  AttackConfig aux = ce;
  aux.objective = AttackObjective::CrossEntropyPlusAux;
  aux.aux_weight = 0.005;
  const auto& grid = d.cfg.attack.epsilon_grid;
  const SweepResult a = evaluate_under_attack(d.model, d.split.test, grid, ce, 80);
  const SweepResult b = evaluate_under_attack(d.model, d.split.test, grid, aux, 80);
  double mean_gap = 0.0;  // aux minus ce, in error fraction
  for (std::size_t i = 0; i < grid.size(); ++i) mean_gap += b.rows[i].adv_error - a.rows[i].adv_error;
  mean_gap /= static_cast<double>(grid.size());
  const double points = 100.0 * mean_gap;
  return {points <= 5.0, "mean adv error gap (aux - ce) " + fmt(points) + " points" +
                             (std::abs(points) < 2.0 ? ", within 2" : ", outside 2")};
}

Outcome criterion11() {
  const std::vector<std::pair<SparseMoeShape, std::uint64_t>> cases = [] {
    std::vector<std::pair<SparseMoeShape, std::uint64_t>> out;
    const int dims[5][6] = {{3, 2, 1, 4, 2, 0}, {4, 3, 2, 5, 3, 0}, {5, 4, 2, 6, 3, 0}, {6, 4, 3, 8, 2, 1},
                            {4, 3, 2, 4, 3, 2}};
    for (std::uint64_t i = 0; i < 5; ++i) {
      SparseMoeShape s;
      s.dim = dims[i][0];
      s.num_experts = dims[i][1];
      s.k = dims[i][2];
      s.hidden = dims[i][3];
      s.num_classes = dims[i][4];
      s.num_blocks = dims[i][5];
      out.emplace_back(s, 300 + i);
    }
    return out;
  }();
  double worst = 0.0;
  for (const auto& [shape, seed] : cases) {
    const SparseMoE m = init_sparse_moe(shape, seed);
    const LabeledDataset data = gen_cluster_classification(shape.num_classes, 3, shape.dim, 1.0, seed);
    SparseMoE grads = zeros_like(m);
    total_loss(m, data.x, data.labels, {}, RouterMode::Train, seed, &grads);
    SparseMoE probe = m;
    auto p = parameter_blocks(probe);
    const auto g = parameter_blocks(std::as_const(grads));
    double num = 0.0, den = 0.0;
    const double h = 1e-6;
    for (std::size_t b = 0; b < p.size(); ++b) {
      for (std::size_t j = 0; j < p[b].size(); ++j) {
        const double keep = p[b][j];
        p[b][j] = keep + h;
        const double up = total_loss(probe, data.x, data.labels, {}, RouterMode::Train, seed).total;
        p[b][j] = keep - h;
        const double down = total_loss(probe, data.x, data.labels, {}, RouterMode::Train, seed).total;
        p[b][j] = keep;
        const double fd = (up - down) / (2 * h);
        num += (fd - g[b][j]) * (fd - g[b][j]);
        den += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  return {worst <= 1e-4, "worst relative gradient error " + fmt(worst) + " over 5 models"};
}

// ---------------------------------------------------------------- harness

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string comparable(const fs::path& p) {
  if (p.extension() != ".json") return slurp(p);
  auto j = nlohmann::ordered_json::parse(slurp(p));
  j.erase("timing");
  return j.dump(2);
}

Outcome criterion12() {
  const fs::path root = fs::temp_directory_path() / "moerob_acceptance_determinism";
  fs::remove_all(root);
  int files = 0, mismatched = 0;
  for (const auto& scenario : scenario_names()) {
    Config c = desk_config();
    c.general.scenario = scenario;
    c.general.seed = 12;
    c.data.train_rows_per_class = 16;
    c.data.test_rows_per_class = 8;
    c.model.dim = 6;
    c.model.experts = 4;
    c.model.hidden = 6;
    c.model.classes = 3;
    c.train.steps = 40;
    c.attack.steps = 8;
    c.sweep.experts = {1, 2, 4};
    c.theory.lemma1_samples = 200;
    const fs::path a = root / scenario / "a", b = root / scenario / "b";
    emit_results(run_scenario(c), a.string(), "both");
    emit_results(run_scenario(c), b.string(), "both");
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      if (comparable(entry.path()) != comparable(b / entry.path().filename())) ++mismatched;
    }
  }
  fs::remove_all(root);
  return {files > 0 && mismatched == 0,
          std::to_string(files) + " files over " + std::to_string(scenario_names().size()) + " scenarios, " +
              std::to_string(mismatched) + " differ"};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3,  criterion4,
                                                       criterion5, criterion6, criterion7,  criterion8,
                                                       criterion9, criterion10, criterion11, criterion12};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
