// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <iterator>
#include <string>

#include "moerob/errors.hpp"
#include "moerob/rng.hpp"

namespace moerob {

bool top1_correct(const Vector& logits, const Vector& label_row) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < logits.size(); ++c) {
    if (logits(c) > logits(best)) best = c;
  }
  return label_row(best) > 0.5;
}

EvalScore precision_at_1(const Matrix& logits, const Matrix& labels) {
  if (logits.rows() == 0) throw ContractError("precision_at_1: empty dataset");
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
    throw ContractError("precision_at_1: logits and labels differ in shape");
  }
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!(labels.row(i).maxCoeff() > 0.5)) throw ContractError("precision_at_1: row " + std::to_string(i) + " has no label");
    if (top1_correct(logits.row(i).transpose(), labels.row(i).transpose())) ++hits;
  }
  EvalScore s;
  s.precision_at_1 = static_cast<double>(hits) / static_cast<double>(logits.rows());
  s.false_discovery_rate = 1.0 - s.precision_at_1;
  return s;
}

double iou(std::vector<int> a, std::vector<int> b) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<int> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

double routing_change_rate(const std::vector<RoutingRecord>& before, const std::vector<RoutingRecord>& after) {
  if (before.size() != after.size()) {
    throw ContractError("routing_change_rate: " + std::to_string(before.size()) + " records before, " +
                        std::to_string(after.size()) + " after");
  }
  if (before.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].selected.size() != after[i].selected.size()) {
      throw ContractError("routing_change_rate: selections of different size at example " + std::to_string(i));
    }
    total += iou(before[i].selected, after[i].selected);
  }
  return 1.0 - total / static_cast<double>(before.size());
}

RoutingShift routing_shift(const std::vector<std::vector<RoutingRecord>>& before,
                           const std::vector<std::vector<RoutingRecord>>& after) {
  if (before.size() != after.size()) throw ContractError("routing_shift: example count mismatch");
  RoutingShift out;
  if (before.empty()) return out;
  const std::size_t layers = before.front().size();
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<RoutingRecord> b, a;
    for (std::size_t i = 0; i < before.size(); ++i) {
      if (before[i].size() != layers || after[i].size() != layers) throw ContractError("routing_shift: layer count mismatch");
      b.push_back(before[i][l]);
      a.push_back(after[i][l]);
    }
    out.per_layer_rate.push_back(routing_change_rate(b, a));
  }
  return out;
}

LipschitzEstimate empirical_lipschitz(const std::function<double(const Vector&)>& f, const std::vector<PointPair>& pairs) {
  LipschitzEstimate est;
  for (const auto& [x, xp] : pairs) {
    const double dist = (x - xp).norm();
    if (dist == 0.0) {
      ++est.skipped_pairs;
      continue;
    }
    est.value = std::max(est.value, std::abs(f(x) - f(xp)) / dist);
  }
  if (est.skipped_pairs > 0) {
    std::clog << "empirical_lipschitz: skipped " << est.skipped_pairs << " coincident pair(s)\n";
  }
  return est;
}

std::vector<PointPair> random_point_pairs(int dim, int count, double radius, double max_offset, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-radius, radius);
  std::uniform_real_distribution<double> o(-max_offset, max_offset);
  std::vector<PointPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    Vector x(dim), xp(dim);
    for (int c = 0; c < dim; ++c) x(c) = u(rng);
    for (int c = 0; c < dim; ++c) xp(c) = x(c) + o(rng);
    out.emplace_back(std::move(x), std::move(xp));
  }
  return out;
}

}  // namespace moerob
