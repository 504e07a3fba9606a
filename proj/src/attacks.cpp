// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moerob/errors.hpp"
#include "moerob/metrics.hpp"
#include "moerob/rng.hpp"

namespace moerob {

double AttackConfig::effective_step_size() const {
  if (step_size > 0.0) return step_size;
  return steps > 0 ? epsilon / static_cast<double>(steps) : 0.0;
}

namespace {

void check_config(const AttackConfig& cfg) {
  if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon)) throw ContractError("attack: epsilon must be finite and >= 0");
  if (cfg.steps < 0) throw ContractError("attack: steps must be >= 0");
  if (cfg.clip_min && cfg.clip_max && *cfg.clip_min > *cfg.clip_max) throw ContractError("attack: clip_min > clip_max");
}

Vector sign_of(const Vector& g) {
  return g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Vector project(const Vector& x0, const Vector& p, const AttackConfig& cfg) {
  Vector out = p.array().max(x0.array() - cfg.epsilon).min(x0.array() + cfg.epsilon).matrix();
  if (cfg.clip_min) out = out.cwiseMax(*cfg.clip_min);
  if (cfg.clip_max) out = out.cwiseMin(*cfg.clip_max);
  return out;
}

std::vector<RoutingRecord> routing_at(const SparseMoE& model, const Vector& x, std::uint64_t tie_seed) {
  // same stream a one-row batch uses inside total_loss
  Rng rng(derive_seed(tie_seed, std::uint64_t{0}));
  return sparse_forward(model, x, CombineMode::Weighted, RouterMode::Eval, rng).routing();
}

}  // namespace

double attack_objective(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg,
                        std::uint64_t tie_seed, Vector* grad, bool* misclassified) {
  if (x.size() != model.dim()) throw ContractError("attack_objective: input has wrong dimension");
  LossWeights w{0.0, 0.0};
  if (cfg.objective == AttackObjective::CrossEntropyPlusAux) w = {cfg.aux_weight, cfg.aux_weight};
  Matrix xm = x.transpose();
  Matrix lm = label_row.transpose();
  Matrix g;
  const LossResult res = total_loss(model, xm, lm, w, RouterMode::Eval, tie_seed, nullptr, grad ? &g : nullptr);
  if (grad) *grad = g.row(0).transpose();
  if (misclassified) *misclassified = !top1_correct(res.traces.front().logits, label_row);
  return res.total;
}

Vector fgsm(const Objective& objective, const Vector& x, const AttackConfig& cfg) {
  check_config(cfg);
  Vector g;
  objective(x, &g, nullptr);
  if (!all_finite(g)) throw AttackFailure("fgsm: non-finite gradient");
  return project(x, x + cfg.epsilon * sign_of(g), cfg);
}

AscentResult pgd(const Objective& objective, const Vector& x, const AttackConfig& cfg) {
  check_config(cfg);
  AscentResult res;
  Vector g;
  bool mis = false;
  res.start_loss = objective(x, &g, &mis);
  res.point = x;
  res.loss = res.start_loss;
  res.misclassified = mis;
  res.found_misclassified = mis;
  if (!(cfg.epsilon > 0.0) || cfg.steps == 0) return res;
  if (!all_finite(g)) throw AttackFailure("pgd: non-finite gradient at the starting point");

  auto consider = [&](const Vector& cand, double loss, bool cand_mis) {
    res.found_misclassified = res.found_misclassified || cand_mis;
    if (loss > res.loss) {
      res.point = cand;
      res.loss = loss;
      res.misclassified = cand_mis;
    }
  };
  if (cfg.track_best_iterate) {
    // the FGSM point, so the result dominates a single full step
    const Vector f = project(x, x + cfg.epsilon * sign_of(g), cfg);
    bool fm = false;
    const double fl = objective(f, nullptr, &fm);
    consider(f, fl, fm);
  }
  const double alpha = cfg.effective_step_size();
  Vector cur = x;
  double cur_loss = res.start_loss;
  bool cur_mis = mis;
  for (int t = 0; t < cfg.steps; ++t) {
    if (!all_finite(g)) throw AttackFailure("pgd: non-finite gradient at step " + std::to_string(t));
    cur = project(x, cur + alpha * sign_of(g), cfg);
    cur_loss = objective(cur, &g, &cur_mis);
    if (!std::isfinite(cur_loss)) throw AttackFailure("pgd: non-finite objective at step " + std::to_string(t));
    if (cfg.track_best_iterate) consider(cur, cur_loss, cur_mis);
    else res.found_misclassified = res.found_misclassified || cur_mis;
  }
  if (!cfg.track_best_iterate) {
    res.point = cur;
    res.loss = cur_loss;
    res.misclassified = cur_mis;
  }
  return res;
}

Vector fgsm(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg,
            std::uint64_t tie_seed) {
  return fgsm([&](const Vector& p, Vector* g, bool* m) { return attack_objective(model, p, label_row, cfg, tie_seed, g, m); },
              x, cfg);
}

AttackRow pgd(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg, Rng& rng) {
  const std::uint64_t tie_seed = rng();
  const AscentResult r = pgd(
      [&](const Vector& p, Vector* g, bool* m) { return attack_objective(model, p, label_row, cfg, tie_seed, g, m); },
      x, cfg);
  AttackRow row;
  row.perturbed = r.point;
  row.clean_loss = r.start_loss;
  row.achieved_loss = r.loss;
  row.misclassified = r.misclassified;
  row.found_misclassified = r.found_misclassified;
  row.routing_before = routing_at(model, x, tie_seed);
  row.routing_after = routing_at(model, r.point, tie_seed);
  return row;
}

SweepResult evaluate_under_attack(const SparseMoE& model, const LabeledDataset& data,
                                  const std::vector<double>& epsilon_grid, const AttackConfig& cfg,
                                  std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  if (n < 1) throw ContractError("evaluate_under_attack: empty dataset");
  if (epsilon_grid.empty()) throw ContractError("evaluate_under_attack: empty epsilon grid");
  for (std::size_t i = 0; i < epsilon_grid.size(); ++i) {
    if (!(epsilon_grid[i] >= 0.0)) throw ContractError("evaluate_under_attack: negative epsilon");
    if (i > 0 && epsilon_grid[i] < epsilon_grid[i - 1]) throw ContractError("evaluate_under_attack: grid must ascend");
  }

  const auto example_rng = [&](Eigen::Index i) { return Rng(derive_seed(seed, static_cast<std::uint64_t>(i))); };

  // clean predictions with the same tie stream the attack uses
  std::vector<bool> clean_mis(static_cast<std::size_t>(n));
  std::vector<AttackRow> carry(static_cast<std::size_t>(n));
  std::vector<bool> found(static_cast<std::size_t>(n), false);
  double clean_err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng r = example_rng(i);
    AttackConfig zero = cfg;
    zero.epsilon = 0.0;
    carry[static_cast<std::size_t>(i)] = pgd(model, data.x.row(i).transpose(), data.labels.row(i).transpose(), zero, r);
    clean_mis[static_cast<std::size_t>(i)] = carry[static_cast<std::size_t>(i)].misclassified;
    found[static_cast<std::size_t>(i)] = clean_mis[static_cast<std::size_t>(i)];
    if (clean_mis[static_cast<std::size_t>(i)]) clean_err += 1.0;
  }
  clean_err /= static_cast<double>(n);

  SweepResult out;
  for (double eps : epsilon_grid) {
    AttackConfig c = cfg;
    c.epsilon = eps;
    AdversarialResult det;
    det.perturbed_inputs = Matrix(n, data.x.cols());
    SweepRow sr;
    sr.epsilon = eps;
    sr.clean_error = clean_err;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      Rng r = example_rng(i);
      AttackRow row = pgd(model, data.x.row(i).transpose(), data.labels.row(i).transpose(), c, r);
      found[u] = found[u] || row.found_misclassified;
      if (row.achieved_loss > carry[u].achieved_loss) carry[u] = std::move(row);
      const AttackRow& best = carry[u];
      det.perturbed_inputs.row(i) = best.perturbed.transpose();
      det.achieved_losses.push_back(best.achieved_loss);
      det.misclassified.push_back(found[u]);
      det.routing_before.push_back(best.routing_before);
      det.routing_after.push_back(best.routing_after);
      if (found[u]) sr.adv_error += 1.0;
      sr.mean_adv_loss += best.achieved_loss;
      sr.max_perturbation = std::max(sr.max_perturbation, (best.perturbed - data.x.row(i).transpose()).lpNorm<Eigen::Infinity>());
    }
    sr.adv_error /= static_cast<double>(n);
    sr.mean_adv_loss /= static_cast<double>(n);
    sr.routing_change = routing_shift(det.routing_before, det.routing_after).per_layer_rate;
    out.rows.push_back(std::move(sr));
    out.details.push_back(std::move(det));
  }
  return out;
}

TrainLog adversarial_train(SparseMoE& model, const LabeledDataset& data, const TrainConfig& train_cfg,
                           const AttackConfig& attack_cfg, std::uint64_t seed) {
  check_config(attack_cfg);
  TrainLog log;
  const std::uint64_t noise_root = derive_seed(seed, "router-noise");
  const std::uint64_t batch_root = derive_seed(seed, "minibatch");
  const std::uint64_t attack_root = derive_seed(seed, "adversarial");
  for (int step = 0; step < train_cfg.steps; ++step) {
    const auto idx = minibatch_indices(data.rows(), train_cfg.batch_size, step, batch_root);
    LabeledDataset batch = idx.size() == static_cast<std::size_t>(data.rows()) ? data : data.take(idx);
    if (attack_cfg.epsilon > 0.0) {
      const std::uint64_t step_root = derive_seed(attack_root, static_cast<std::uint64_t>(step));
      for (Eigen::Index i = 0; i < batch.rows(); ++i) {
        Rng r(derive_seed(step_root, static_cast<std::uint64_t>(i)));
        const AttackRow row = pgd(model, batch.x.row(i).transpose(), batch.labels.row(i).transpose(), attack_cfg, r);
        batch.x.row(i) = row.perturbed.transpose();
      }
    }
    log.losses.push_back(train_step(model, batch, train_cfg.learning_rate, train_cfg.aux,
                                    derive_seed(noise_root, static_cast<std::uint64_t>(step))));
  }
  return log;
}

}  // namespace moerob
