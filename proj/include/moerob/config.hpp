// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace moerob {

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"theorem1", "theorem2", "lemma1", "train",
                                              "attack-sweep", "routing-shift", "expert-sweep"};
  return names;
}

struct GeneralConfig {
  std::string scenario = "theorem1";
  std::uint64_t seed = 0;
};

// Cluster-classification data for the sparse model scenarios.
struct DataConfig {
  int train_rows_per_class = 64;
  int test_rows_per_class = 32;
  double separation = 1.0;
  double cluster_std = 1.0;
};

// Regression instances for theorem1 / theorem2 and the smooth model for lemma1.
struct TheoryConfig {
  int experts = 4;
  int dim = 8;
  int rows_per_expert = 8;
  double noise = 0.0;
  bool unit_norm_weights = false;
  bool rotate = false;
  double gamma = 0.5;
  double leakage = 0.05;
  double residual_scale = 0.01;
  int lemma1_experts = 3;
  int lemma1_dim = 4;
  double lemma1_scale = 1.0;
  int lemma1_samples = 1000;
  double lemma1_radius = 5.0;
};

struct ModelConfig {
  int dim = 16;
  int experts = 8;
  int k = 2;
  int hidden = 16;
  int classes = 4;
  int blocks = 0;            // (dense, MoE) pairs before the head
  double noise_sigma = 0.0;  // <= 0 means 1/E
};

struct TrainSection {
  int steps = 300;
  double learning_rate = 0.1;
  int batch_size = 0;
  double importance_weight = 0.005;
  double load_weight = 0.005;
  double adversarial_epsilon = 0.0;  // > 0 switches to PGD adversarial training
  int adversarial_steps = 10;
};

struct AttackSection {
  std::vector<double> epsilon_grid{0.0, 0.01, 0.03, 0.1, 0.3};
  int steps = 40;
  double step_size = 0.0;
  std::string objective = "ce";  // ce | ce+aux
  double aux_weight = 0.005;
  bool track_best = true;
  int max_examples = 0;  // 0 = whole test split
};

struct SweepSection {
  std::vector<int> experts{1, 2, 4, 8};
  int wide_dense_hidden = 0;  // > 0 adds an E=1 model with this hidden width
};

struct OutputSection {
  std::string dir = "results";
  std::string format = "both";  // csv | json | both
};

struct Config {
  GeneralConfig general;
  DataConfig data;
  TheoryConfig theory;
  ModelConfig model;
  TrainSection train;
  AttackSection attack;
  SweepSection sweep;
  OutputSection output;

  /// Range and enum checks; throws ContractError.
  void validate() const;
};

/// `key = value` lines under `[section]` headers, `#` comments. Keys before any header belong
/// to [general]. Unknown keys, malformed lines and bad values throw ParseError with the line.
Config parse_config(std::string_view text);
Config load_config(const std::string& path);

/// Every field, grouped by section, in declaration order.
nlohmann::ordered_json config_to_json(const Config& cfg);

/// Config file text that parses back to `cfg`.
std::string config_to_text(const Config& cfg);

}  // namespace moerob
