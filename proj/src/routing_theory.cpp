// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/routing_theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moerob/errors.hpp"
#include "moerob/rng.hpp"

namespace moerob {

namespace {

Matrix gram(const Matrix& x) { return x.transpose() * x; }

std::vector<RegressionDataset> split(const RegressionDataset& ds, const ExpertPartition& part) {
  part.validate(ds.rows());
  std::vector<RegressionDataset> out;
  out.reserve(static_cast<std::size_t>(part.num_experts));
  for (int i = 0; i < part.num_experts; ++i) out.push_back(subset(ds, part, i));
  return out;
}

}  // namespace

Vector solve_dense(const RegressionDataset& ds, double rtol) { return least_squares(ds.x, ds.y, rtol); }

std::vector<Vector> solve_experts(const RegressionDataset& ds, const ExpertPartition& part, double rtol) {
  std::vector<Vector> out;
  for (const auto& sub : split(ds, part)) {
    out.push_back(sub.rows() == 0 ? Vector::Zero(ds.dim()) : least_squares(sub.x, sub.y, rtol));
  }
  return out;
}

SolutionSet solve_all(const RegressionDataset& ds, const ExpertPartition& part, double rtol) {
  SolutionSet s;
  s.dense_weights = solve_dense(ds, rtol);
  s.expert_weights = solve_experts(ds, part, rtol);
  s.dense_lipschitz = s.dense_weights.norm();
  for (const auto& w : s.expert_weights) s.expert_lipschitz.push_back(w.norm());
  return s;
}

ProjectorSet build_projectors(const RegressionDataset& ds, const ExpertPartition& part, double rank_rtol) {
  const auto subsets = split(ds, part);
  const Eigen::Index d = ds.dim();
  const SvdResult s = svd(gram(ds.x));

  ProjectorSet out;
  const double cutoff = s.singular_values.size() ? rank_rtol * s.singular_values(0) : 0.0;
  std::vector<std::vector<Eigen::Index>> columns(static_cast<std::size_t>(part.num_experts));
  Eigen::Index retained = 0;
  for (Eigen::Index k = 0; k < s.singular_values.size(); ++k) {
    if (!(s.singular_values(k) > cutoff) || s.singular_values(k) <= 0.0) break;
    const Vector v = s.right_vectors.col(k);
    int best = 0;
    double best_score = -1.0;
    for (int i = 0; i < part.num_experts; ++i) {
      const auto& xi = subsets[static_cast<std::size_t>(i)].x;
      const double score = xi.rows() ? (xi * v).squaredNorm() : 0.0;
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    out.basis_assignment.push_back(best);
    columns[static_cast<std::size_t>(best)].push_back(k);
    ++retained;
  }
  out.singular_values = s.singular_values.head(retained);

  for (int i = 0; i < part.num_experts; ++i) {
    const auto& cols = columns[static_cast<std::size_t>(i)];
    Matrix basis(d, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) basis.col(static_cast<Eigen::Index>(c)) = s.right_vectors.col(cols[c]);
    out.projectors.push_back(basis * basis.transpose());
    out.bases.push_back(std::move(basis));
  }
  return out;
}

SeparationMetrics separation_metrics(const RegressionDataset& ds, const ExpertPartition& part,
                                     const ProjectorSet& projectors, double rtol) {
  const auto subsets = split(ds, part);
  if (static_cast<int>(projectors.projectors.size()) != part.num_experts) {
    throw ContractError("separation_metrics: projector count does not match expert count");
  }
  const Eigen::Index d = ds.dim();
  const Matrix dense_pinv = pinv(gram(ds.x), rtol);

  std::vector<Matrix> expert_pinv;
  std::vector<Matrix> row_space;
  for (const auto& sub : subsets) {
    if (sub.rows() == 0) {
      expert_pinv.push_back(Matrix::Zero(d, d));
      row_space.push_back(Matrix::Zero(d, d));
      continue;
    }
    const Matrix zi = gram(sub.x);
    expert_pinv.push_back(pinv(zi, rtol));
    row_space.push_back(range_projector(zi, rtol));
  }

  SeparationMetrics m;
  for (int i = 0; i < part.num_experts; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    m.eps1 = std::max(m.eps1, spectral_norm(projectors.projectors[ii] * dense_pinv - expert_pinv[ii]));
    for (int j = 0; j < part.num_experts; ++j) {
      if (j == i) continue;
      m.eps2 = std::max(m.eps2, spectral_norm(expert_pinv[ii] * row_space[static_cast<std::size_t>(j)]));
    }
  }
  return m;
}

Theorem1Report theorem1_check(const RegressionDataset& ds, const ExpertPartition& part, double rtol) {
  const auto subsets = split(ds, part);
  Theorem1Report rep;
  rep.solutions = solve_all(ds, part, rtol);
  rep.metrics = separation_metrics(ds, part, build_projectors(ds, part, rtol), rtol);
  rep.xty_norm = (ds.x.transpose() * ds.y).norm();

  std::vector<double> cross_norms;
  for (const auto& sub : subsets) {
    cross_norms.push_back(sub.rows() ? (sub.x.transpose() * sub.y).norm() : 0.0);
  }
  double cross_total = 0.0;
  for (double c : cross_norms) cross_total += c;

  rep.lhs = rep.solutions.dense_weights.squaredNorm();
  for (int i = 0; i < part.num_experts; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const double bracket = rep.solutions.expert_lipschitz[ii] - rep.metrics.eps1 * rep.xty_norm -
                           rep.metrics.eps2 * (cross_total - cross_norms[ii]);
    const double term = std::max(0.0, bracket);
    rep.per_expert_terms.push_back(term);
    rep.rhs += term * term;
  }
  rep.slack = rep.lhs - rep.rhs;
  rep.holds = rep.lhs >= rep.rhs - kTheoremTolerance;
  return rep;
}

Theorem2Report theorem2_check(const RegressionDataset& ds, const ExpertPartition& part,
                              const std::vector<Vector>& betas, double gamma, double rank_rtol) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("theorem2_check: gamma must lie in (0, 1]");
  const auto subsets = split(ds, part);
  if (static_cast<int>(betas.size()) != part.num_experts) {
    throw ContractError("theorem2_check: need one beta per expert");
  }
  const Eigen::Index d = ds.dim();

  std::vector<Matrix> z;
  std::vector<Eigen::LDLT<Matrix>> z_solvers;
  for (int i = 0; i < part.num_experts; ++i) {
    const auto& sub = subsets[static_cast<std::size_t>(i)];
    if (betas[static_cast<std::size_t>(i)].size() != d) throw ContractError("theorem2_check: beta dimension mismatch");
    Matrix zi = sub.rows() ? gram(sub.x) : Matrix::Zero(d, d);
    const Vector sigma = svd(zi).singular_values;
    if (sigma.size() == 0 || !(sigma(sigma.size() - 1) > rank_rtol * sigma(0))) {
      throw ContractError("theorem2_check: Z_" + std::to_string(i) + " = X_i^T X_i of expert " + std::to_string(i) +
                          " is not invertible");
    }
    z_solvers.emplace_back(zi);
    z.push_back(std::move(zi));
  }
  const Matrix z_all = gram(ds.x);
  const Eigen::LDLT<Matrix> z_all_solver(z_all);

  Theorem2Report rep;
  rep.betas = betas;
  rep.gamma = gamma;

  Vector xtr = Vector::Zero(d);
  for (int i = 0; i < part.num_experts; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    const auto& sub = subsets[ii];
    Vector r = sub.y - sub.x * betas[ii];
    const Vector xri = sub.x.transpose() * r;
    xtr += xri;
    rep.eta_i.push_back(z_solvers[ii].solve(xri));
    rep.residuals.push_back(std::move(r));
  }
  rep.eta = z_all_solver.solve(xtr);

  const double inv_sqrt_gamma = 1.0 / std::sqrt(gamma);
  rep.condition_holds = true;
  for (int i = 0; i < part.num_experts; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    Vector delta = Vector::Zero(d);
    for (int j = 0; j < part.num_experts; ++j) {
      if (j == i) continue;
      delta += z_all_solver.solve(z[static_cast<std::size_t>(j)] * (betas[ii] - betas[static_cast<std::size_t>(j)]));
    }
    const double margin =
        delta.norm() - ((betas[ii] + rep.eta).norm() + inv_sqrt_gamma * (betas[ii] + rep.eta_i[ii]).norm());
    rep.condition_margins.push_back(margin);
    if (margin < 0.0) rep.condition_holds = false;
    rep.deltas.push_back(std::move(delta));
  }

  const SolutionSet sol = solve_all(ds, part, rank_rtol);
  rep.dense_sq_norm = sol.dense_weights.squaredNorm();
  for (int i = 0; i < part.num_experts; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    rep.max_expert_sq_norm = std::max(rep.max_expert_sq_norm, sol.expert_weights[ii].squaredNorm());
    rep.identity_residual =
        std::max(rep.identity_residual, (sol.expert_weights[ii] - (betas[ii] + rep.eta_i[ii])).norm());
  }
  rep.conclusion_holds = rep.max_expert_sq_norm <= gamma * rep.dense_sq_norm + kTheoremTolerance;
  if (rep.condition_holds && !rep.conclusion_holds) {
    throw NumericalFailure("theorem2_check: separation condition holds but max_i ||w_i*||^2 = " +
                           std::to_string(rep.max_expert_sq_norm) + " exceeds gamma ||w*||^2 = " +
                           std::to_string(gamma * rep.dense_sq_norm));
  }
  return rep;
}

double bubeck_lower_bound(double n, double d, double p, double delta) {
  if (!(n > 0 && d > 0 && p > 0) || delta < 0) throw ContractError("bubeck_lower_bound: sizes must be positive");
  return delta * std::sqrt(n * d / p);
}

SeparatedInstance gen_separated_instance(int num_experts, int dim, int rows_per_expert, double leakage,
                                         double residual_scale, std::uint64_t seed) {
  if (dim < num_experts) throw ContractError("gen_separated_instance: dim < num_experts");
  if (rows_per_expert < dim) throw ContractError("gen_separated_instance: rows_per_expert < dim leaves Z_i singular");
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SeparatedInstance out;
  const Eigen::Index n = static_cast<Eigen::Index>(num_experts) * rows_per_expert;
  out.dataset.x = Matrix(n, dim);
  out.dataset.y = Vector(n);
  out.partition.num_experts = num_experts;
  out.partition.assignment.resize(static_cast<std::size_t>(n));
  for (int e = 0; e < num_experts; ++e) {
    const auto [begin, end] = coordinate_block(num_experts, dim, e);
    Vector beta = Vector::Zero(dim);
    for (int c = begin; c < end; ++c) beta(c) = normal(rng);
    beta /= beta.norm();
    for (int r = 0; r < rows_per_expert; ++r) {
      const Eigen::Index row = static_cast<Eigen::Index>(e) * rows_per_expert + r;
      for (int c = 0; c < dim; ++c) {
        const double block = (c >= begin && c < end) ? uniform(rng) : 0.0;
        out.dataset.x(row, c) = block + leakage * normal(rng);
      }
      out.dataset.y(row) = out.dataset.x.row(row).dot(beta) + residual_scale * normal(rng);
      out.partition.assignment[static_cast<std::size_t>(row)] = e;
    }
    out.betas.push_back(std::move(beta));
  }
  return out;
}

PartitionedRegression gen_random_partitioned_regression(int rows, int dim, int num_experts, std::uint64_t seed) {
  if (rows < 1 || dim < num_experts || num_experts < 1) throw ContractError("gen_random_partitioned_regression: bad sizes");
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::uniform_real_distribution<double> log_leak(std::log(1e-3), 0.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, num_experts - 1);

  const double leakage = std::exp(log_leak(rng));
  std::vector<Vector> betas;
  for (int e = 0; e < num_experts; ++e) {
    Vector b(dim);
    for (int c = 0; c < dim; ++c) b(c) = normal(rng);
    betas.push_back(std::move(b));
  }

  PartitionedRegression out;
  out.dataset.x = Matrix(rows, dim);
  out.dataset.y = Vector(rows);
  out.partition.num_experts = num_experts;
  for (int r = 0; r < rows; ++r) {
    const int e = pick(rng);
    const auto [begin, end] = coordinate_block(num_experts, dim, e);
    for (int c = 0; c < dim; ++c) {
      const double block = (c >= begin && c < end) ? uniform(rng) : 0.0;
      out.dataset.x(r, c) = block + leakage * normal(rng);
    }
    out.dataset.y(r) = out.dataset.x.row(r).dot(betas[static_cast<std::size_t>(e)]) + 0.1 * normal(rng);
    out.partition.assignment.push_back(e);
  }
  return out;
}

}  // namespace moerob
