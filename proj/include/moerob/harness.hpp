// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "moerob/attacks.hpp"
#include "moerob/config.hpp"
#include "moerob/csv.hpp"
#include "moerob/sparse_moe.hpp"
#include "moerob/synth_data.hpp"

namespace moerob {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct ResultTable {
  std::string name;  // file stem
  CsvTable table;
};

struct RunReport {
  std::string scenario;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;
  nlohmann::ordered_json results;
  std::vector<ResultTable> tables;
  bool verified = true;  // theorem scenarios: the bound check held
  double wall_seconds = 0.0;
  std::string started_at;  // UTC, ISO 8601
};

struct ClusterSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Clusters drawn once with train+test rows per class, then split inside each class so
/// both halves share centres.
ClusterSplit make_cluster_split(const Config& cfg);

SparseMoeShape model_shape(const ModelConfig& m);
TrainConfig train_config(const Config& cfg);
AttackConfig attack_config(const Config& cfg);

/// Initialises from the config seed and trains (adversarially when train.adversarial_epsilon > 0).
SparseMoE train_model(const Config& cfg, const SparseMoeShape& shape, const LabeledDataset& train, TrainLog* log = nullptr);

/// The test split, truncated to attack.max_examples when that is set (keeping rows spread over classes).
LabeledDataset attack_subset(const Config& cfg, const LabeledDataset& test);

/// epsilon, clean_error, adv_error, mean_adv_loss, routing_change_layer_0..
CsvTable sweep_table(const SweepResult& sweep, int moe_layers);

/// Dispatches on cfg.general.scenario. Module errors are rethrown with the scenario name prepended.
RunReport run_scenario(const Config& cfg);

/// Everything except timing is a pure function of the config.
nlohmann::ordered_json report_to_json(const RunReport& report);

/// Writes <dir>/<scenario>.json and/or one CSV per table. Returns the paths written.
std::vector<std::string> emit_results(const RunReport& report, const std::string& dir, const std::string& format);

}  // namespace moerob
