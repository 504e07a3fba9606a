// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/numeric.hpp"

#include <cmath>
#include <numbers>

#include "moerob/errors.hpp"

namespace moerob {

bool all_finite(const Matrix& m) { return m.allFinite(); }

SvdResult svd(const Matrix& m) {
  if (!m.allFinite()) throw NumericalFailure("svd: non-finite input");
  SvdResult out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.left_vectors = Matrix(m.rows(), 0);
    out.singular_values = Vector(0);
    out.right_vectors = Matrix(m.cols(), 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) throw NumericalFailure("svd: Jacobi iteration did not converge");
  out.left_vectors = solver.matrixU();
  out.singular_values = solver.singularValues();
  out.right_vectors = solver.matrixV();
  return out;
}

namespace {

Eigen::Index retained_rank(const Vector& sigma, double rtol) {
  if (sigma.size() == 0) return 0;
  const double cutoff = rtol * sigma(0);
  Eigen::Index r = 0;
  while (r < sigma.size() && sigma(r) > cutoff && sigma(r) > 0.0) ++r;
  return r;
}

}  // namespace

Matrix pinv(const Matrix& m, double rtol) {
  if (!(rtol > 0.0)) throw ContractError("pinv: rtol must be positive");
  const SvdResult s = svd(m);
  const Eigen::Index r = retained_rank(s.singular_values, rtol);
  Matrix out = Matrix::Zero(m.cols(), m.rows());
  for (Eigen::Index i = 0; i < r; ++i) {
    out.noalias() += (s.right_vectors.col(i) / s.singular_values(i)) * s.left_vectors.col(i).transpose();
  }
  return out;
}

Matrix range_projector(const Matrix& m, double rtol) {
  const SvdResult s = svd(m);
  const Eigen::Index r = retained_rank(s.singular_values, rtol);
  const auto u = s.left_vectors.leftCols(r);
  return u * u.transpose();
}

double spectral_norm(const Matrix& m) {
  const SvdResult s = svd(m);
  return s.singular_values.size() == 0 ? 0.0 : s.singular_values(0);
}

Vector least_squares(const Matrix& x, const Vector& y, double rtol) {
  if (x.rows() != y.size()) {
    throw ContractError("least_squares: design has " + std::to_string(x.rows()) + " rows but target has " +
                        std::to_string(y.size()) + " entries");
  }
  const Matrix gram = x.transpose() * x;
  return pinv(gram, rtol) * (x.transpose() * y);
}

double gaussian_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double gaussian_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace moerob
