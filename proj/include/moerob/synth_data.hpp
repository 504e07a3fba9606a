// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "moerob/numeric.hpp"

namespace moerob {

struct RegressionDataset {
  Matrix x;  // N x D
  Vector y;  // N

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

/// Fixed routing of dataset rows to experts. Empty subsets are allowed.
struct ExpertPartition {
  std::vector<int> assignment;
  int num_experts = 1;

  std::vector<Eigen::Index> rows_of(int expert) const;
  std::vector<int> empty_experts() const;
  /// Throws ContractError if the partition does not fit a dataset with `rows` rows.
  void validate(Eigen::Index rows) const;
};

/// Rows (and targets) of `ds` routed to `expert`.
RegressionDataset subset(const RegressionDataset& ds, const ExpertPartition& part, int expert);

struct LabeledDataset {
  Matrix x;       // N x D
  Matrix labels;  // N x C, multi-hot in {0,1}

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  Eigen::Index num_classes() const { return labels.cols(); }
  LabeledDataset take(const std::vector<Eigen::Index>& idx) const;
};

struct OrthogonalRegressionOptions {
  bool unit_norm_weights = false;
  bool random_rotation = false;
};

struct OrthogonalRegression {
  RegressionDataset dataset;
  ExpertPartition partition;
  std::vector<Vector> true_weights;
  Matrix rotation;  // identity unless random_rotation was requested
};

/// Expert i's rows live on its own coordinate block; D/E coordinates each, with the
/// remainder going to the lowest-index experts. Features are uniform in [-1,1] within the
/// block, targets are X beta_i plus Gaussian noise of the given scale.
OrthogonalRegression gen_orthogonal_regression(int num_experts, int rows_per_expert, int dim,
                                               double noise_scale, std::uint64_t seed,
                                               const OrthogonalRegressionOptions& opts = {});

/// Coordinate block [begin, end) owned by `expert` in gen_orthogonal_regression.
std::pair<int, int> coordinate_block(int num_experts, int dim, int expert);

struct AntialignedPair {
  RegressionDataset dataset;
  ExpertPartition partition;
};

/// First `rows` rows go to expert 0, the next `rows` are their exact negations with equal
/// targets and go to expert 1.
AntialignedPair gen_antialigned_pair(int rows, int dim, std::uint64_t seed);

/// Gaussian clusters centred at distinct random corners of the cube [-separation, separation]^D,
/// one class per cluster. Rows are grouped by cluster.
LabeledDataset gen_cluster_classification(int num_clusters, int rows_per_cluster, int dim, double separation,
                                          std::uint64_t seed, double cluster_std = 1.0);

/// Random orthogonal matrix (Haar, via QR of a Gaussian matrix with sign fix).
Matrix random_rotation(int dim, std::uint64_t seed);

void write_csv(std::ostream& os, const RegressionDataset& ds);
void write_csv(std::ostream& os, const LabeledDataset& ds);
RegressionDataset read_regression_csv(std::istream& is);
LabeledDataset read_labeled_csv(std::istream& is);

}  // namespace moerob
