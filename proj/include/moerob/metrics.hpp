// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "moerob/numeric.hpp"
#include "moerob/sparse_moe.hpp"

namespace moerob {

struct EvalScore {
  double precision_at_1 = 0.0;
  double false_discovery_rate = 1.0;
};

/// True when the highest logit (lowest index on ties) is one of the row's true labels.
bool top1_correct(const Vector& logits, const Vector& label_row);

EvalScore precision_at_1(const Matrix& logits, const Matrix& labels);

/// |A n B| / |A u B|; two empty sets count as identical.
double iou(std::vector<int> a, std::vector<int> b);

/// 1 - mean IoU of the selected expert sets, one record per example.
double routing_change_rate(const std::vector<RoutingRecord>& before, const std::vector<RoutingRecord>& after);

struct RoutingShift {
  std::vector<double> per_layer_rate;
};

/// records[i][l] is example i's routing at MoE layer l.
RoutingShift routing_shift(const std::vector<std::vector<RoutingRecord>>& before,
                           const std::vector<std::vector<RoutingRecord>>& after);

using PointPair = std::pair<Vector, Vector>;

struct LipschitzEstimate {
  double value = 0.0;
  int skipped_pairs = 0;  // coincident pairs
};

/// max over pairs of |f(x) - f(x')| / ||x - x'||, a lower witness for the Lipschitz constant.
LipschitzEstimate empirical_lipschitz(const std::function<double(const Vector&)>& f,
                                      const std::vector<PointPair>& pairs);

/// x uniform in the l_inf box of `radius`, x' = x + offset with offset uniform in [-max_offset, max_offset]^D.
std::vector<PointPair> random_point_pairs(int dim, int count, double radius, double max_offset, std::uint64_t seed);

}  // namespace moerob
