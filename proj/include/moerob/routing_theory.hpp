// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "moerob/numeric.hpp"
#include "moerob/synth_data.hpp"

namespace moerob {

/// Dense least-squares fit and per-expert fits under a fixed routing. For a linear model
/// f(x) = <w, x> the Lipschitz constant is ||w||.
struct SolutionSet {
  Vector dense_weights;
  std::vector<Vector> expert_weights;
  double dense_lipschitz = 0.0;
  std::vector<double> expert_lipschitz;
};

/// Orthogonal projectors U_i U_i^T built by handing each retained singular vector of X^T X
/// to the expert whose rows have the most energy along it.
struct ProjectorSet {
  std::vector<Matrix> projectors;   // D x D each
  std::vector<Matrix> bases;        // D x r_i, orthonormal columns
  std::vector<int> basis_assignment;  // expert index per retained singular vector
  Vector singular_values;           // retained singular values of X^T X
};

struct SeparationMetrics {
  double eps1 = 0.0;  // in-subspace distance
  double eps2 = 0.0;  // cross-subspace distance
};

struct Theorem1Report {
  double lhs = 0.0;  // ||w*||^2
  std::vector<double> per_expert_terms;  // clipped brackets, >= 0
  double rhs = 0.0;  // sum of squared terms
  bool holds = false;
  double slack = 0.0;  // lhs - rhs
  SeparationMetrics metrics;
  SolutionSet solutions;
  double xty_norm = 0.0;
};

struct Theorem2Report {
  std::vector<Vector> betas;
  std::vector<Vector> residuals;
  std::vector<Vector> eta_i;
  Vector eta;
  std::vector<Vector> deltas;
  double gamma = 1.0;
  std::vector<double> condition_margins;  // ||Delta_i|| - (||beta_i+eta|| + ||beta_i+eta_i||/sqrt(gamma))
  bool condition_holds = false;
  bool conclusion_holds = false;
  double max_expert_sq_norm = 0.0;
  double dense_sq_norm = 0.0;
  double identity_residual = 0.0;  // max_i ||w_i* - (beta_i + eta_i)||
};

inline constexpr double kTheoremTolerance = 1e-9;

Vector solve_dense(const RegressionDataset& ds, double rtol = kDefaultPinvRtol);
/// Empty subsets yield the zero vector.
std::vector<Vector> solve_experts(const RegressionDataset& ds, const ExpertPartition& part,
                                  double rtol = kDefaultPinvRtol);
SolutionSet solve_all(const RegressionDataset& ds, const ExpertPartition& part, double rtol = kDefaultPinvRtol);

/// Singular vectors of X^T X below rank_rtol * sigma_max are dropped; ties in the
/// assignment score ||X_i v||^2 go to the lowest expert index.
ProjectorSet build_projectors(const RegressionDataset& ds, const ExpertPartition& part,
                              double rank_rtol = kDefaultPinvRtol);

/// Tightest constants: eps1 = max_i ||U_iU_i^T (X^TX)^+ - (X_i^TX_i)^+||_2 and
/// eps2 = max_{i != j} ||(X_i^TX_i)^+ P_j||_2 with P_j the projector onto the row space of X_j.
SeparationMetrics separation_metrics(const RegressionDataset& ds, const ExpertPartition& part,
                                     const ProjectorSet& projectors, double rtol = kDefaultPinvRtol);

Theorem1Report theorem1_check(const RegressionDataset& ds, const ExpertPartition& part,
                              double rtol = kDefaultPinvRtol);

/// Requires every Z_i = X_i^T X_i to be invertible; throws ContractError naming the expert otherwise.
/// Throws NumericalFailure if the sufficient condition holds but the conclusion does not.
Theorem2Report theorem2_check(const RegressionDataset& ds, const ExpertPartition& part,
                              const std::vector<Vector>& betas, double gamma, double rank_rtol = kDefaultPinvRtol);

/// delta * sqrt(N * D / P): the universal Lipschitz lower bound for delta-memorisation,
/// up to constants and log factors.
double bubeck_lower_bound(double n, double d, double p, double delta);

struct SeparatedInstance {
  RegressionDataset dataset;
  ExpertPartition partition;
  std::vector<Vector> betas;
};

/// Expert i's rows live mostly on coordinate block i with a small dense leakage term
/// (so every Z_i is invertible); y_i = X_i beta_i + r_i with unit-norm beta_i on block i
/// and Gaussian residuals of scale residual_scale.
SeparatedInstance gen_separated_instance(int num_experts, int dim, int rows_per_expert, double leakage,
                                         double residual_scale, std::uint64_t seed);

/// Dense Gaussian features, Gaussian targets, uniformly random routing.
struct PartitionedRegression {
  RegressionDataset dataset;
  ExpertPartition partition;
};
PartitionedRegression gen_random_partitioned_regression(int rows, int dim, int num_experts, std::uint64_t seed);

}  // namespace moerob
