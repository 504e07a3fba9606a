// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "moerob/sparse_moe.hpp"
#include "moerob/synth_data.hpp"

namespace moerob {

enum class AttackObjective { CrossEntropy, CrossEntropyPlusAux };

struct AttackConfig {
  double epsilon = 0.0;  // l_inf radius in feature units
  int steps = 40;
  double step_size = 0.0;  // <= 0 selects epsilon / steps
  AttackObjective objective = AttackObjective::CrossEntropy;
  double aux_weight = 0.005;  // weight on each auxiliary loss for CrossEntropyPlusAux
  bool track_best_iterate = true;
  std::optional<double> clip_min;  // optional input-domain box
  std::optional<double> clip_max;

  double effective_step_size() const;
};

/// Differentiable objective to maximise. Writes the input gradient when `grad` is non-null and
/// whether the point counts as an error when `misclassified` is non-null.
using Objective = std::function<double(const Vector& x, Vector* grad, bool* misclassified)>;

/// x + epsilon * sgn(grad) with sgn(0) = 0, then clipped if the config asks for it.
Vector fgsm(const Objective& objective, const Vector& x, const AttackConfig& cfg);

struct AscentResult {
  Vector point;
  double start_loss = 0.0;
  double loss = 0.0;
  bool misclassified = false;        // at `point`
  bool found_misclassified = false;  // at any evaluated candidate
};

/// Signed-gradient ascent from x with per-step projection onto the l_inf ball of radius epsilon.
/// With track_best_iterate the highest-objective candidate is returned; candidates are x itself,
/// the single full-radius signed step from x, and every iterate.
/// Throws AttackFailure on a non-finite gradient or objective.
AscentResult pgd(const Objective& objective, const Vector& x, const AttackConfig& cfg);

/// Attack objective at a single input under evaluation-mode routing (no router noise):
/// softmax cross-entropy, plus aux_weight * (importance + load loss) over the one-example
/// batch when the objective asks for it. Writes the input gradient when `grad` is non-null.
double attack_objective(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg,
                        std::uint64_t tie_seed, Vector* grad = nullptr, bool* misclassified = nullptr);

Vector fgsm(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg,
            std::uint64_t tie_seed = 0);

struct AttackRow {
  Vector perturbed;
  double clean_loss = 0.0;
  double achieved_loss = 0.0;
  bool misclassified = false;      // at the returned point
  bool found_misclassified = false;  // at any evaluated candidate inside the ball
  std::vector<RoutingRecord> routing_before;
  std::vector<RoutingRecord> routing_after;
};

/// PGD on attack_objective; the evaluation tie-break seed is drawn once from `rng`.
AttackRow pgd(const SparseMoE& model, const Vector& x, const Vector& label_row, const AttackConfig& cfg, Rng& rng);

struct AdversarialResult {
  Matrix perturbed_inputs;
  std::vector<double> achieved_losses;
  std::vector<bool> misclassified;
  std::vector<std::vector<RoutingRecord>> routing_before;
  std::vector<std::vector<RoutingRecord>> routing_after;
};

struct SweepRow {
  double epsilon = 0.0;
  double clean_error = 0.0;
  double adv_error = 0.0;
  double mean_adv_loss = 0.0;
  std::vector<double> routing_change;  // per MoE layer
  double max_perturbation = 0.0;       // max_i ||x_adv - x||_inf
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<AdversarialResult> details;  // parallel to rows
};

/// Runs PGD per example for every epsilon of an ascending grid. Balls are nested, so the
/// previous epsilon's adversarial point stays a feasible candidate: an example counts as an
/// adversarial error once any evaluated point inside its ball is misclassified, and the
/// reported point is the highest-loss feasible one found so far.
SweepResult evaluate_under_attack(const SparseMoE& model, const LabeledDataset& data,
                                  const std::vector<double>& epsilon_grid, const AttackConfig& cfg,
                                  std::uint64_t seed);

/// Each step perturbs the minibatch with PGD against the current model, then takes a
/// train_step on the perturbed batch. Seeds follow train(), so epsilon = 0 reproduces it.
TrainLog adversarial_train(SparseMoE& model, const LabeledDataset& data, const TrainConfig& train_cfg,
                           const AttackConfig& attack_cfg, std::uint64_t seed);

}  // namespace moerob
