// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

namespace moerob {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultPinvRtol = 1e-10;

struct SvdResult {
  Matrix left_vectors;    // m x r, orthonormal columns
  Vector singular_values; // r, descending
  Matrix right_vectors;   // n x r, orthonormal columns
};

/// Thin SVD with r = min(rows, cols). Deterministic for a given input.
/// Throws NumericalFailure if the input is non-finite or the solver does not converge.
SvdResult svd(const Matrix& m);

/// Moore-Penrose pseudoinverse; singular values below rtol * sigma_max are treated as zero.
Matrix pinv(const Matrix& m, double rtol = kDefaultPinvRtol);

/// Orthogonal projector onto the column space of m (same cutoff rule as pinv).
Matrix range_projector(const Matrix& m, double rtol = kDefaultPinvRtol);

double spectral_norm(const Matrix& m);

/// Returns (X^T X)^+ X^T y, the Gram-pseudoinverse form rather than a QR solve,
/// so rank-deficient designs give the minimum-norm solution of the normal equations.
Vector least_squares(const Matrix& x, const Vector& y, double rtol = kDefaultPinvRtol);

/// Standard normal CDF.
double gaussian_cdf(double z);
double gaussian_pdf(double z);

bool all_finite(const Matrix& m);

}  // namespace moerob
