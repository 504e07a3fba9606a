// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "moerob/numeric.hpp"

namespace moerob {

/// Softmax router p_i(x) = exp(<s_i, x>) / sum_j exp(<s_j, x>); rows of routing_params are s_i.
struct SoftmaxRouter {
  Matrix routing_params;  // E x D

  int num_experts() const { return static_cast<int>(routing_params.rows()); }
  Eigen::Index dim() const { return routing_params.cols(); }
};

struct LinearExpert {
  Vector weights;
  double bias = 0.0;

  double operator()(const Vector& x) const { return weights.dot(x) + bias; }
  double lipschitz() const { return weights.norm(); }
};

/// Scalar-output smooth mixture f(x) = sum_i p_i(x) f_i(x) with every expert always active.
struct SmoothMoE {
  SoftmaxRouter router;
  std::vector<LinearExpert> experts;

  /// Throws ContractError on inconsistent sizes.
  void validate() const;
  Eigen::Index dim() const { return router.dim(); }
};

struct Lemma1Report {
  double grad_norm = 0.0;
  double expert_term = 0.0;  // sum_i p_i L_i
  double router_term = 0.0;  // || sum_i p_i f_i (s_i - sbar) ||
  double bound = 0.0;
  Vector sbar;
};

/// Numerically stable softmax of a logit vector (max-logit subtraction).
Vector softmax(const Vector& logits);

Vector routing_probs(const SoftmaxRouter& router, const Vector& x);
double forward(const SmoothMoE& model, const Vector& x);
/// sum_i p_i grad f_i + sum_i p_i f_i (s_i - sbar(x)).
Vector input_gradient(const SmoothMoE& model, const Vector& x);
Lemma1Report lemma1_pointwise(const SmoothMoE& model, const Vector& x);

/// Uniform samples in the l_inf box of the given radius around `center`.
struct BoxDomain {
  Vector center;
  double radius = 5.0;
};

struct Lemma1Global {
  double sup_router_term = 0.0;  // Monte-Carlo estimate; a lower estimate of the true supremum
  double max_expert_lipschitz = 0.0;
  double global_bound = 0.0;
  std::vector<double> pointwise_bounds;
};

/// Uniform draws from the box; lemma1_global evaluates exactly these points for the same seed.
std::vector<Vector> sample_box(const BoxDomain& domain, Eigen::Index dim, int num_samples, std::uint64_t seed);

Lemma1Global lemma1_global(const SmoothMoE& model, const BoxDomain& domain, int num_samples, std::uint64_t seed);

/// Random model with N(0, scale^2) entries for routing params, expert weights and biases.
SmoothMoE random_smooth_moe(int num_experts, int dim, double scale, std::uint64_t seed);

}  // namespace moerob
