// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/harness.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moerob/checkpoint.hpp"
#include "moerob/errors.hpp"
#include "moerob/metrics.hpp"
#include "moerob/rng.hpp"
#include "moerob/routing_theory.hpp"
#include "moerob/smooth_moe.hpp"

namespace moerob {

using nlohmann::ordered_json;

namespace {

std::uint64_t seed_for(const Config& cfg, std::string_view purpose) { return derive_seed(cfg.general.seed, purpose); }

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

// FNV-1a over the raw bytes of the coordinates
std::uint64_t hash_point(const Vector& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(x.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json sweep_rows_json(const SweepResult& sweep) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : sweep.rows) {
    ordered_json o;
    o["epsilon"] = r.epsilon;
    o["clean_error"] = r.clean_error;
    o["adv_error"] = r.adv_error;
    o["mean_adv_loss"] = r.mean_adv_loss;
    o["routing_change"] = r.routing_change;
    o["max_perturbation"] = r.max_perturbation;
    rows.push_back(std::move(o));
  }
  return rows;
}

RunReport run_theorem1(const Config& cfg) {
  const auto& t = cfg.theory;
  OrthogonalRegressionOptions opts;
  opts.unit_norm_weights = t.unit_norm_weights;
  opts.random_rotation = t.rotate;
  const auto inst = gen_orthogonal_regression(t.experts, t.rows_per_expert, t.dim, t.noise, seed_for(cfg, "theory"), opts);
  const Theorem1Report rep = theorem1_check(inst.dataset, inst.partition);

  RunReport out;
  out.verified = rep.holds;
  out.results["lhs"] = rep.lhs;
  out.results["rhs"] = rep.rhs;
  out.results["per_expert_terms"] = rep.per_expert_terms;
  out.results["eps1"] = rep.metrics.eps1;
  out.results["eps2"] = rep.metrics.eps2;
  out.results["holds"] = rep.holds;
  out.results["slack"] = rep.slack;
  out.results["dense_norm"] = rep.solutions.dense_weights.norm();
  out.results["expert_norms"] = ordered_json::array();
  for (const auto& w : rep.solutions.expert_weights) out.results["expert_norms"].push_back(w.norm());

  CsvTable tab;
  tab.header = {"expert", "term", "expert_norm"};
  for (std::size_t i = 0; i < rep.per_expert_terms.size(); ++i) {
    tab.add_row({std::to_string(i), format_number(rep.per_expert_terms[i]),
                 format_number(rep.solutions.expert_weights[i].norm())});
  }
  out.tables.push_back({"theorem1", std::move(tab)});
  return out;
}

RunReport run_theorem2(const Config& cfg) {
  const auto& t = cfg.theory;
  const auto inst = gen_separated_instance(t.experts, t.dim, t.rows_per_expert, t.leakage, t.residual_scale,
                                           seed_for(cfg, "theory"));
  const Theorem2Report rep = theorem2_check(inst.dataset, inst.partition, inst.betas, t.gamma);

  RunReport out;
  // the theorem says nothing when its condition fails; only a failed conclusion under the condition is a violation
  out.verified = !rep.condition_holds || rep.conclusion_holds;
  out.results["gamma"] = rep.gamma;
  out.results["condition_holds"] = rep.condition_holds;
  out.results["conclusion_holds"] = rep.conclusion_holds;
  out.results["condition_margins"] = rep.condition_margins;
  out.results["max_expert_sq_norm"] = rep.max_expert_sq_norm;
  out.results["dense_sq_norm"] = rep.dense_sq_norm;
  out.results["identity_residual"] = rep.identity_residual;
  out.results["holds"] = out.verified;

  CsvTable tab;
  tab.header = {"expert", "condition_margin", "delta_norm", "eta_i_norm"};
  for (std::size_t i = 0; i < rep.condition_margins.size(); ++i) {
    tab.add_row({std::to_string(i), format_number(rep.condition_margins[i]), format_number(rep.deltas[i].norm()),
                 format_number(rep.eta_i[i].norm())});
  }
  out.tables.push_back({"theorem2", std::move(tab)});
  return out;
}

RunReport run_lemma1(const Config& cfg) {
  const auto& t = cfg.theory;
  const SmoothMoE model = random_smooth_moe(t.lemma1_experts, t.lemma1_dim, t.lemma1_scale, seed_for(cfg, "model"));
  BoxDomain domain{Vector::Zero(t.lemma1_dim), t.lemma1_radius};
  const std::uint64_t sample_seed = seed_for(cfg, "samples");
  const Lemma1Global global = lemma1_global(model, domain, t.lemma1_samples, sample_seed);

  RunReport out;
  CsvTable tab;
  tab.header = {"x_hash", "grad_norm", "expert_term", "router_term", "bound"};
  double worst_gap = -1e300;
  for (const Vector& x : sample_box(domain, t.lemma1_dim, t.lemma1_samples, sample_seed)) {
    const Lemma1Report r = lemma1_pointwise(model, x);
    worst_gap = std::max(worst_gap, r.grad_norm - r.bound);
    tab.add_row({hex64(hash_point(x)), format_number(r.grad_norm), format_number(r.expert_term),
                 format_number(r.router_term), format_number(r.bound)});
  }
  out.verified = worst_gap <= 0.0;
  out.results["samples"] = t.lemma1_samples;
  out.results["max_expert_lipschitz"] = global.max_expert_lipschitz;
  out.results["sup_router_term"] = global.sup_router_term;
  out.results["global_bound"] = global.global_bound;
  out.results["max_grad_minus_bound"] = worst_gap;
  out.results["holds"] = out.verified;
  out.tables.push_back({"lemma1", std::move(tab)});
  return out;
}

ordered_json precision_json(const SparseMoE& model, const LabeledDataset& d, std::uint64_t tie_seed) {
  const EvalScore s = precision_at_1(predict_logits(model, d.x, tie_seed), d.labels);
  return {{"precision_at_1", s.precision_at_1}, {"false_discovery_rate", s.false_discovery_rate}};
}

RunReport run_train(const Config& cfg) {
  const ClusterSplit split = make_cluster_split(cfg);
  TrainLog log;
  const SparseMoE model = train_model(cfg, model_shape(cfg.model), split.train, &log);

  RunReport out;
  out.results["parameters"] = parameter_count(model);
  out.results["final_loss"] = log.losses.empty() ? 0.0 : log.losses.back();
  out.results["train"] = precision_json(model, split.train, seed_for(cfg, "eval"));
  out.results["test"] = precision_json(model, split.test, seed_for(cfg, "eval"));
  std::ostringstream ckpt;
  save_checkpoint(ckpt, model);
  out.results["checkpoint"] = ordered_json::parse(ckpt.str());

  CsvTable tab;
  tab.header = {"step", "loss"};
  for (std::size_t i = 0; i < log.losses.size(); ++i) tab.add_row({std::to_string(i), format_number(log.losses[i])});
  out.tables.push_back({"train_loss", std::move(tab)});
  return out;
}

RunReport run_attack_sweep(const Config& cfg, bool routing_only) {
  const ClusterSplit split = make_cluster_split(cfg);
  const SparseMoE model = train_model(cfg, model_shape(cfg.model), split.train);
  const LabeledDataset eval = attack_subset(cfg, split.test);
  const SweepResult sweep = evaluate_under_attack(model, eval, cfg.attack.epsilon_grid, attack_config(cfg),
                                                  seed_for(cfg, "attack"));
  RunReport out;
  out.results["examples"] = eval.rows();
  out.results["test"] = precision_json(model, split.test, seed_for(cfg, "eval"));
  out.results["rows"] = sweep_rows_json(sweep);
  CsvTable full = sweep_table(sweep, model.num_moe_layers());
  if (routing_only) {
    CsvTable tab;
    tab.header = {"epsilon"};
    for (int l = 0; l < model.num_moe_layers(); ++l) tab.header.push_back("routing_change_layer_" + std::to_string(l));
    for (const auto& r : sweep.rows) {
      std::vector<std::string> row{format_number(r.epsilon)};
      for (double v : r.routing_change) row.push_back(format_number(v));
      tab.add_row(std::move(row));
    }
    out.tables.push_back({"routing_shift", std::move(tab)});
  } else {
    out.tables.push_back({"attack_sweep", std::move(full)});
  }
  return out;
}

RunReport run_expert_sweep(const Config& cfg) {
  const ClusterSplit split = make_cluster_split(cfg);
  const LabeledDataset eval = attack_subset(cfg, split.test);

  struct Variant {
    std::string label;
    ModelConfig model;
  };
  std::vector<Variant> variants;
  for (int e : cfg.sweep.experts) {
    ModelConfig m = cfg.model;
    m.experts = e;
    m.k = std::min(cfg.model.k, e);
    variants.push_back({e == 1 ? "dense" : "moe-" + std::to_string(e), m});
  }
  if (cfg.sweep.wide_dense_hidden > 0) {
    ModelConfig m = cfg.model;
    m.experts = 1;
    m.k = 1;
    m.hidden = cfg.sweep.wide_dense_hidden;
    variants.push_back({"dense-wide", m});
  }

  RunReport out;
  out.results["examples"] = eval.rows();
  out.results["curves"] = ordered_json::array();
  CsvTable tab;
  const int layers = cfg.model.blocks + 1;
  tab.header = {"model", "experts", "k", "hidden", "parameters", "epsilon", "clean_error", "adv_error", "mean_adv_loss"};
  for (int l = 0; l < layers; ++l) tab.header.push_back("routing_change_layer_" + std::to_string(l));

  for (const auto& v : variants) {
    const SparseMoE model = train_model(cfg, model_shape(v.model), split.train);
    const SweepResult sweep = evaluate_under_attack(model, eval, cfg.attack.epsilon_grid, attack_config(cfg),
                                                    seed_for(cfg, "attack"));
    ordered_json curve;
    curve["model"] = v.label;
    curve["experts"] = v.model.experts;
    curve["k"] = v.model.k;
    curve["hidden"] = v.model.hidden;
    curve["parameters"] = parameter_count(model);
    curve["rows"] = sweep_rows_json(sweep);
    out.results["curves"].push_back(std::move(curve));
    for (const auto& r : sweep.rows) {
      std::vector<std::string> row{v.label,
                                   std::to_string(v.model.experts),
                                   std::to_string(v.model.k),
                                   std::to_string(v.model.hidden),
                                   std::to_string(parameter_count(model)),
                                   format_number(r.epsilon),
                                   format_number(r.clean_error),
                                   format_number(r.adv_error),
                                   format_number(r.mean_adv_loss)};
      for (double c : r.routing_change) row.push_back(format_number(c));
      tab.add_row(std::move(row));
    }
  }
  out.tables.push_back({"expert_sweep", std::move(tab)});
  return out;
}

template <typename E>
[[noreturn]] void rethrow_with(const std::string& scenario, const E& e) {
  throw E("scenario " + scenario + ": " + e.what());
}

RunReport dispatch(const Config& cfg) {
  const std::string& s = cfg.general.scenario;
  if (s == "theorem1") return run_theorem1(cfg);
  if (s == "theorem2") return run_theorem2(cfg);
  if (s == "lemma1") return run_lemma1(cfg);
  if (s == "train") return run_train(cfg);
  if (s == "attack-sweep") return run_attack_sweep(cfg, false);
  if (s == "routing-shift") return run_attack_sweep(cfg, true);
  if (s == "expert-sweep") return run_expert_sweep(cfg);
  throw ContractError("unknown scenario '" + s + "'");
}

}  // namespace

ClusterSplit make_cluster_split(const Config& cfg) {
  const int per_class = cfg.data.train_rows_per_class + cfg.data.test_rows_per_class;
  const LabeledDataset all = gen_cluster_classification(cfg.model.classes, per_class, cfg.model.dim, cfg.data.separation,
                                                        seed_for(cfg, "data"), cfg.data.cluster_std);
  std::vector<Eigen::Index> tr, te;
  for (int c = 0; c < cfg.model.classes; ++c) {
    for (int r = 0; r < per_class; ++r) {
      const Eigen::Index row = static_cast<Eigen::Index>(c) * per_class + r;
      (r < cfg.data.train_rows_per_class ? tr : te).push_back(row);
    }
  }
  return {all.take(tr), all.take(te)};
}

SparseMoeShape model_shape(const ModelConfig& m) {
  SparseMoeShape s;
  s.dim = m.dim;
  s.num_experts = m.experts;
  s.k = m.k;
  s.hidden = m.hidden;
  s.num_classes = m.classes;
  s.num_blocks = m.blocks;
  s.noise_sigma = m.noise_sigma;
  return s;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig t;
  t.steps = cfg.train.steps;
  t.learning_rate = cfg.train.learning_rate;
  t.batch_size = cfg.train.batch_size;
  t.aux = {cfg.train.importance_weight, cfg.train.load_weight};
  return t;
}

AttackConfig attack_config(const Config& cfg) {
  AttackConfig a;
  a.steps = cfg.attack.steps;
  a.step_size = cfg.attack.step_size;
  a.objective = cfg.attack.objective == "ce+aux" ? AttackObjective::CrossEntropyPlusAux : AttackObjective::CrossEntropy;
  a.aux_weight = cfg.attack.aux_weight;
  a.track_best_iterate = cfg.attack.track_best;
  return a;
}

SparseMoE train_model(const Config& cfg, const SparseMoeShape& shape, const LabeledDataset& train_set, TrainLog* log) {
  SparseMoE model = init_sparse_moe(shape, seed_for(cfg, "init"));
  const TrainConfig tc = train_config(cfg);
  TrainLog local;
  if (cfg.train.adversarial_epsilon > 0.0) {
    AttackConfig a;
    a.epsilon = cfg.train.adversarial_epsilon;
    a.steps = cfg.train.adversarial_steps;
    local = adversarial_train(model, train_set, tc, a, seed_for(cfg, "train"));
  } else {
    local = train(model, train_set, tc, seed_for(cfg, "train"));
  }
  if (log) *log = std::move(local);
  return model;
}

LabeledDataset attack_subset(const Config& cfg, const LabeledDataset& test) {
  const int limit = cfg.attack.max_examples;
  if (limit <= 0 || limit >= test.rows()) return test;
  // round-robin over classes so a truncated set stays balanced
  const Eigen::Index classes = test.num_classes();
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(classes));
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    Eigen::Index c = 0;
    test.labels.row(i).maxCoeff(&c);
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  std::vector<Eigen::Index> idx;
  for (std::size_t r = 0; static_cast<int>(idx.size()) < limit; ++r) {
    for (const auto& rows : by_class) {
      if (r < rows.size() && static_cast<int>(idx.size()) < limit) idx.push_back(rows[r]);
    }
  }
  std::sort(idx.begin(), idx.end());
  return test.take(idx);
}

CsvTable sweep_table(const SweepResult& sweep, int moe_layers) {
  CsvTable tab;
  tab.header = {"epsilon", "clean_error", "adv_error", "mean_adv_loss"};
  for (int l = 0; l < moe_layers; ++l) tab.header.push_back("routing_change_layer_" + std::to_string(l));
  for (const auto& r : sweep.rows) {
    std::vector<std::string> row{format_number(r.epsilon), format_number(r.clean_error), format_number(r.adv_error),
                                 format_number(r.mean_adv_loss)};
    for (double c : r.routing_change) row.push_back(format_number(c));
    tab.add_row(std::move(row));
  }
  return tab;
}

RunReport run_scenario(const Config& cfg) {
  cfg.validate();
  const std::string& s = cfg.general.scenario;
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  try {
    rep = dispatch(cfg);
  } catch (const ContractError& e) {
    rethrow_with(s, e);
  } catch (const NumericalFailure& e) {
    rethrow_with(s, e);
  } catch (const DivergenceError& e) {
    rethrow_with(s, e);
  } catch (const AttackFailure& e) {
    rethrow_with(s, e);
  }
  rep.scenario = s;
  rep.seed = cfg.general.seed;
  rep.config = config_to_json(cfg);
  rep.started_at = started;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

ordered_json report_to_json(const RunReport& report) {
  ordered_json j;
  j["scenario"] = report.scenario;
  j["library_version"] = kLibraryVersion;
  j["seed"] = report.seed;
  j["verified"] = report.verified;
  j["config"] = report.config;
  j["results"] = report.results;
  j["timing"] = {{"started_at", report.started_at}, {"wall_seconds", report.wall_seconds}};
  return j;
}

std::vector<std::string> emit_results(const RunReport& report, const std::string& dir, const std::string& format) {
  if (format != "csv" && format != "json" && format != "both") {
    throw ContractError("emit_results: format must be csv, json or both");
  }
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    return f;
  };
  if (format != "json") {
    for (const auto& t : report.tables) {
      const auto p = std::filesystem::path(dir) / (t.name + ".csv");
      auto f = open(p);
      write_csv(f, t.table);
      if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
      written.push_back(p.string());
    }
  }
  if (format != "csv") {
    const auto p = std::filesystem::path(dir) / (report.scenario + ".json");
    auto f = open(p);
    f << report_to_json(report).dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
    written.push_back(p.string());
  }
  return written;
}

}  // namespace moerob
