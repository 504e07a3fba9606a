// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/synth_data.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include "moerob/csv.hpp"
#include "moerob/errors.hpp"
#include "moerob/rng.hpp"

namespace moerob {

std::vector<Eigen::Index> ExpertPartition::rows_of(int expert) const {
  std::vector<Eigen::Index> out;
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] == expert) out.push_back(static_cast<Eigen::Index>(r));
  }
  return out;
}

std::vector<int> ExpertPartition::empty_experts() const {
  std::vector<int> counts(static_cast<std::size_t>(std::max(num_experts, 0)), 0);
  for (int a : assignment) {
    if (a >= 0 && a < num_experts) ++counts[static_cast<std::size_t>(a)];
  }
  std::vector<int> out;
  for (int i = 0; i < num_experts; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0) out.push_back(i);
  }
  return out;
}

void ExpertPartition::validate(Eigen::Index rows) const {
  if (num_experts < 1) throw ContractError("partition: num_experts must be >= 1");
  if (static_cast<Eigen::Index>(assignment.size()) != rows) {
    throw ContractError("partition: " + std::to_string(assignment.size()) + " assignments for " +
                        std::to_string(rows) + " rows");
  }
  for (int a : assignment) {
    if (a < 0 || a >= num_experts) throw ContractError("partition: expert index " + std::to_string(a) + " out of range");
  }
}

RegressionDataset subset(const RegressionDataset& ds, const ExpertPartition& part, int expert) {
  const auto idx = part.rows_of(expert);
  RegressionDataset out{Matrix(static_cast<Eigen::Index>(idx.size()), ds.dim()),
                        Vector(static_cast<Eigen::Index>(idx.size()))};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = ds.x.row(idx[r]);
    out.y(static_cast<Eigen::Index>(r)) = ds.y(idx[r]);
  }
  return out;
}

LabeledDataset LabeledDataset::take(const std::vector<Eigen::Index>& idx) const {
  LabeledDataset out{Matrix(static_cast<Eigen::Index>(idx.size()), dim()),
                     Matrix(static_cast<Eigen::Index>(idx.size()), num_classes())};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
    out.labels.row(static_cast<Eigen::Index>(r)) = labels.row(idx[r]);
  }
  return out;
}

std::pair<int, int> coordinate_block(int num_experts, int dim, int expert) {
  const int base = dim / num_experts;
  const int extra = dim % num_experts;
  const int begin = expert * base + std::min(expert, extra);
  const int size = base + (expert < extra ? 1 : 0);
  return {begin, begin + size};
}

Matrix random_rotation(int dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
  const Matrix rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c) {
    if (rr(c, c) < 0) q.col(c) *= -1.0;
  }
  return q;
}

OrthogonalRegression gen_orthogonal_regression(int num_experts, int rows_per_expert, int dim, double noise_scale,
                                               std::uint64_t seed, const OrthogonalRegressionOptions& opts) {
  if (num_experts < 1) throw ContractError("gen_orthogonal_regression: need at least one expert");
  if (dim < num_experts) {
    throw ContractError("gen_orthogonal_regression: dim " + std::to_string(dim) + " < num_experts " +
                        std::to_string(num_experts));
  }
  if (rows_per_expert < 0 || noise_scale < 0) throw ContractError("gen_orthogonal_regression: negative size or noise");

  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const Eigen::Index n = static_cast<Eigen::Index>(num_experts) * rows_per_expert;
  OrthogonalRegression out;
  out.dataset.x = Matrix::Zero(n, dim);
  out.dataset.y = Vector::Zero(n);
  out.partition.num_experts = num_experts;
  out.partition.assignment.resize(static_cast<std::size_t>(n));

  for (int e = 0; e < num_experts; ++e) {
    const auto [begin, end] = coordinate_block(num_experts, dim, e);
    Vector beta = Vector::Zero(dim);
    for (int c = begin; c < end; ++c) beta(c) = normal(rng);
    if (opts.unit_norm_weights) beta /= beta.norm();
    for (int r = 0; r < rows_per_expert; ++r) {
      const Eigen::Index row = static_cast<Eigen::Index>(e) * rows_per_expert + r;
      for (int c = begin; c < end; ++c) out.dataset.x(row, c) = uniform(rng);
      out.dataset.y(row) = out.dataset.x.row(row).dot(beta);
      out.partition.assignment[static_cast<std::size_t>(row)] = e;
    }
    out.true_weights.push_back(std::move(beta));
  }
  if (noise_scale > 0) {
    Rng noise_rng(derive_seed(seed, "target-noise"));
    for (Eigen::Index r = 0; r < n; ++r) out.dataset.y(r) += noise_scale * normal(noise_rng);
  }

  out.rotation = Matrix::Identity(dim, dim);
  if (opts.random_rotation) {
    out.rotation = random_rotation(dim, derive_seed(seed, "rotation"));
    out.dataset.x = out.dataset.x * out.rotation.transpose();
    for (auto& w : out.true_weights) w = out.rotation * w;
  }
  return out;
}

AntialignedPair gen_antialigned_pair(int rows, int dim, std::uint64_t seed) {
  if (dim < 1 || rows < 0) throw ContractError("gen_antialigned_pair: dim must be >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Vector beta(dim);
  for (int c = 0; c < dim; ++c) beta(c) = normal(rng);

  AntialignedPair out;
  out.dataset.x = Matrix(2 * rows, dim);
  out.dataset.y = Vector(2 * rows);
  out.partition.num_experts = 2;
  out.partition.assignment.assign(static_cast<std::size_t>(2 * rows), 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) out.dataset.x(r, c) = uniform(rng);
    out.dataset.x.row(rows + r) = -out.dataset.x.row(r);
    out.dataset.y(r) = out.dataset.x.row(r).dot(beta);
    out.dataset.y(rows + r) = out.dataset.y(r);
    out.partition.assignment[static_cast<std::size_t>(r)] = 0;
  }
  return out;
}

LabeledDataset gen_cluster_classification(int num_clusters, int rows_per_cluster, int dim, double separation,
                                          std::uint64_t seed, double cluster_std) {
  if (num_clusters < 1 || rows_per_cluster < 0 || dim < 1) throw ContractError("gen_cluster_classification: bad sizes");
  if (!(separation > 0)) throw ContractError("gen_cluster_classification: separation must be positive");
  if (dim < 63 && num_clusters > (1LL << dim)) {
    throw ContractError("gen_cluster_classification: more clusters than cube corners");
  }

  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> normal(0.0, cluster_std);

  std::vector<Vector> centers;
  std::set<std::vector<int>> used;
  while (static_cast<int>(centers.size()) < num_clusters) {
    std::vector<int> signs(static_cast<std::size_t>(dim));
    for (auto& s : signs) s = coin(rng) ? 1 : -1;
    if (!used.insert(signs).second) continue;
    Vector c(dim);
    for (int d = 0; d < dim; ++d) c(d) = separation * signs[static_cast<std::size_t>(d)];
    centers.push_back(std::move(c));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(num_clusters) * rows_per_cluster;
  LabeledDataset out{Matrix(n, dim), Matrix::Zero(n, num_clusters)};
  for (int k = 0; k < num_clusters; ++k) {
    for (int r = 0; r < rows_per_cluster; ++r) {
      const Eigen::Index row = static_cast<Eigen::Index>(k) * rows_per_cluster + r;
      for (int d = 0; d < dim; ++d) out.x(row, d) = centers[static_cast<std::size_t>(k)](d) + normal(rng);
      out.labels(row, k) = 1.0;
    }
  }
  return out;
}

namespace {

std::vector<std::string> feature_header(Eigen::Index dim) {
  std::vector<std::string> h;
  for (Eigen::Index d = 0; d < dim; ++d) h.push_back("x" + std::to_string(d));
  return h;
}

double parse_field(const std::string& s, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ParseError(line, "csv: trailing characters in '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError(line, "csv: not a number: '" + s + "'");
  }
}

}  // namespace

void write_csv(std::ostream& os, const RegressionDataset& ds) {
  CsvTable t;
  t.header = feature_header(ds.dim());
  t.header.emplace_back("y");
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index d = 0; d < ds.dim(); ++d) row.push_back(format_number(ds.x(r, d)));
    row.push_back(format_number(ds.y(r)));
    t.add_row(std::move(row));
  }
  write_csv(os, t);
}

void write_csv(std::ostream& os, const LabeledDataset& ds) {
  CsvTable t;
  t.header = feature_header(ds.dim());
  for (Eigen::Index c = 0; c < ds.num_classes(); ++c) t.header.push_back("label" + std::to_string(c));
  for (Eigen::Index r = 0; r < ds.rows(); ++r) {
    std::vector<std::string> row;
    for (Eigen::Index d = 0; d < ds.dim(); ++d) row.push_back(format_number(ds.x(r, d)));
    for (Eigen::Index c = 0; c < ds.num_classes(); ++c) row.push_back(ds.labels(r, c) > 0.5 ? "1" : "0");
    t.add_row(std::move(row));
  }
  write_csv(os, t);
}

RegressionDataset read_regression_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  if (t.header.empty() || t.header.back() != "y") throw ParseError(1, "regression csv: last column must be 'y'");
  const auto dim = static_cast<Eigen::Index>(t.header.size() - 1);
  RegressionDataset ds{Matrix(static_cast<Eigen::Index>(t.rows.size()), dim),
                       Vector(static_cast<Eigen::Index>(t.rows.size()))};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int line = static_cast<int>(r) + 2;
    for (Eigen::Index d = 0; d < dim; ++d)
      ds.x(static_cast<Eigen::Index>(r), d) = parse_field(t.rows[r][static_cast<std::size_t>(d)], line);
    ds.y(static_cast<Eigen::Index>(r)) = parse_field(t.rows[r].back(), line);
  }
  return ds;
}

LabeledDataset read_labeled_csv(std::istream& is) {
  const CsvTable t = read_csv(is);
  Eigen::Index dim = 0;
  while (dim < static_cast<Eigen::Index>(t.header.size()) && t.header[static_cast<std::size_t>(dim)][0] == 'x') ++dim;
  const auto classes = static_cast<Eigen::Index>(t.header.size()) - dim;
  if (dim == 0 || classes == 0) throw ParseError(1, "labeled csv: expected x* then label* columns");
  LabeledDataset ds{Matrix(static_cast<Eigen::Index>(t.rows.size()), dim),
                    Matrix(static_cast<Eigen::Index>(t.rows.size()), classes)};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const int line = static_cast<int>(r) + 2;
    for (Eigen::Index c = 0; c < dim + classes; ++c) {
      const double v = parse_field(t.rows[r][static_cast<std::size_t>(c)], line);
      if (c < dim)
        ds.x(static_cast<Eigen::Index>(r), c) = v;
      else
        ds.labels(static_cast<Eigen::Index>(r), c - dim) = v;
    }
  }
  return ds;
}

}  // namespace moerob
