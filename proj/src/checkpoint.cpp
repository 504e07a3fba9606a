// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/checkpoint.hpp"

#include <istream>
#include <ostream>

#include <json.hpp>

#include "moerob/errors.hpp"

namespace moerob {

namespace {

constexpr const char* kFormat = "moerob-sparse-moe";

template <typename Fn>
void visit_row_major(SparseMoE& m, Fn&& fn) {
  auto mat = [&fn](auto& a) {
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      for (Eigen::Index c = 0; c < a.cols(); ++c) fn(a(r, c));
  };
  auto mlp = [&mat](MlpExpert& e) {
    mat(e.hidden_weights);
    mat(e.hidden_bias);
    mat(e.out_weights);
    mat(e.out_bias);
  };
  for (std::size_t l = 0; l < m.moe_layers.size(); ++l) {
    if (l < m.dense_blocks.size()) mlp(m.dense_blocks[l]);
    mat(m.moe_layers[l].router.routing_params);
    for (auto& e : m.moe_layers[l].experts) mlp(e);
  }
}

}  // namespace

void save_checkpoint(std::ostream& os, const SparseMoE& model) {
  model.validate();
  const SparseMoeShape s = shape_of(model);
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = 1;
  j["header"] = {{"D", s.dim},          {"E", s.num_experts}, {"K", s.k},
                 {"H", s.hidden},       {"C", s.num_classes}, {"sigma", s.noise_sigma},
                 {"blocks", s.num_blocks}, {"noise_enabled", model.head().router.noise_enabled}};
  auto params = nlohmann::ordered_json::array();
  SparseMoE copy = model;
  visit_row_major(copy, [&params](double& v) { params.push_back(v); });
  j["parameters"] = std::move(params);
  os << j.dump(1) << '\n';
}

SparseMoE load_checkpoint(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != kFormat || j.value("version", 0) != 1) {
    throw ParseError(0, "checkpoint: unrecognised format or version");
  }
  const auto& h = j.at("header");
  SparseMoeShape s;
  s.dim = h.at("D").get<int>();
  s.num_experts = h.at("E").get<int>();
  s.k = h.at("K").get<int>();
  s.hidden = h.at("H").get<int>();
  s.num_classes = h.at("C").get<int>();
  s.noise_sigma = h.at("sigma").get<double>();
  s.num_blocks = h.at("blocks").get<int>();
  SparseMoE m = init_sparse_moe(s, 0);
  const bool noise = h.value("noise_enabled", true);
  for (auto& layer : m.moe_layers) layer.router.noise_enabled = noise;

  const auto& params = j.at("parameters");
  if (params.size() != parameter_count(m)) {
    throw ParseError(0, "checkpoint: expected " + std::to_string(parameter_count(m)) + " parameters, found " +
                            std::to_string(params.size()));
  }
  std::size_t next = 0;
  visit_row_major(m, [&](double& v) { v = params[next++].get<double>(); });
  return m;
}

}  // namespace moerob
