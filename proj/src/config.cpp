// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include "moerob/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

#include "moerob/csv.hpp"
#include "moerob/errors.hpp"

namespace moerob {

namespace {

using Slot = std::variant<int*, double*, bool*, std::uint64_t*, std::string*, std::vector<double>*, std::vector<int>*>;

struct Field {
  std::string section;
  std::string key;
  Slot slot;
};

std::vector<Field> fields(Config& c) {
  return {
      {"general", "scenario", &c.general.scenario},
      {"general", "seed", &c.general.seed},

      {"data", "train_rows_per_class", &c.data.train_rows_per_class},
      {"data", "test_rows_per_class", &c.data.test_rows_per_class},
      {"data", "separation", &c.data.separation},
      {"data", "cluster_std", &c.data.cluster_std},

      {"theory", "experts", &c.theory.experts},
      {"theory", "dim", &c.theory.dim},
      {"theory", "rows_per_expert", &c.theory.rows_per_expert},
      {"theory", "noise", &c.theory.noise},
      {"theory", "unit_norm_weights", &c.theory.unit_norm_weights},
      {"theory", "rotate", &c.theory.rotate},
      {"theory", "gamma", &c.theory.gamma},
      {"theory", "leakage", &c.theory.leakage},
      {"theory", "residual_scale", &c.theory.residual_scale},
      {"theory", "lemma1_experts", &c.theory.lemma1_experts},
      {"theory", "lemma1_dim", &c.theory.lemma1_dim},
      {"theory", "lemma1_scale", &c.theory.lemma1_scale},
      {"theory", "lemma1_samples", &c.theory.lemma1_samples},
      {"theory", "lemma1_radius", &c.theory.lemma1_radius},

      {"model", "dim", &c.model.dim},
      {"model", "experts", &c.model.experts},
      {"model", "k", &c.model.k},
      {"model", "hidden", &c.model.hidden},
      {"model", "classes", &c.model.classes},
      {"model", "blocks", &c.model.blocks},
      {"model", "noise_sigma", &c.model.noise_sigma},

      {"train", "steps", &c.train.steps},
      {"train", "learning_rate", &c.train.learning_rate},
      {"train", "batch_size", &c.train.batch_size},
      {"train", "importance_weight", &c.train.importance_weight},
      {"train", "load_weight", &c.train.load_weight},
      {"train", "adversarial_epsilon", &c.train.adversarial_epsilon},
      {"train", "adversarial_steps", &c.train.adversarial_steps},

      {"attack", "epsilon_grid", &c.attack.epsilon_grid},
      {"attack", "steps", &c.attack.steps},
      {"attack", "step_size", &c.attack.step_size},
      {"attack", "objective", &c.attack.objective},
      {"attack", "aux_weight", &c.attack.aux_weight},
      {"attack", "track_best", &c.attack.track_best},
      {"attack", "max_examples", &c.attack.max_examples},

      {"sweep", "experts", &c.sweep.experts},
      {"sweep", "wide_dense_hidden", &c.sweep.wide_dense_hidden},

      {"output", "dir", &c.output.dir},
      {"output", "format", &c.output.format},
  };
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integral(const std::string& v, int line, const std::string& key) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ParseError(line, "'" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& v, int line, const std::string& key) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ParseError(line, "'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

void assign(const Field& f, const std::string& v, int line) {
  const std::string& key = f.key;
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, int>) {
          *p = parse_integral<int>(v, line, key);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          *p = parse_integral<std::uint64_t>(v, line, key);
        } else if constexpr (std::is_same_v<T, double>) {
          *p = parse_double(v, line, key);
        } else if constexpr (std::is_same_v<T, bool>) {
          if (v == "true" || v == "1") *p = true;
          else if (v == "false" || v == "0") *p = false;
          else throw ParseError(line, "'" + key + "' expects true or false, got '" + v + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = v;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          p->clear();
          for (const auto& item : split_list(v)) p->push_back(parse_double(item, line, key));
        } else {
          p->clear();
          for (const auto& item : split_list(v)) p->push_back(parse_integral<int>(item, line, key));
        }
      },
      f.slot);
}

std::string render(const Slot& slot) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          return format_number(*p);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string s;
          for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + format_number((*p)[i]);
          return s;
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
          std::string s;
          for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + std::to_string((*p)[i]);
          return s;
        } else {
          return std::to_string(*p);
        }
      },
      slot);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError("config: " + what);
}

}  // namespace

void Config::validate() const {
  const auto& names = scenario_names();
  require(std::find(names.begin(), names.end(), general.scenario) != names.end(),
          "unknown scenario '" + general.scenario + "'");
  require(data.train_rows_per_class >= 1 && data.test_rows_per_class >= 1, "data row counts must be >= 1");
  require(data.separation > 0 && data.cluster_std >= 0, "data separation must be > 0 and cluster_std >= 0");
  require(theory.experts >= 1 && theory.dim >= 1 && theory.rows_per_expert >= 1, "theory sizes must be >= 1");
  require(theory.noise >= 0, "theory.noise must be >= 0");
  require(theory.gamma > 0 && theory.gamma < 1, "theory.gamma must lie in (0,1)");
  require(theory.lemma1_experts >= 1 && theory.lemma1_dim >= 1 && theory.lemma1_samples >= 1,
          "lemma1 sizes must be >= 1");
  require(theory.lemma1_radius >= 0, "theory.lemma1_radius must be >= 0");
  require(model.dim >= 1 && model.experts >= 1 && model.hidden >= 1 && model.classes >= 2, "model sizes too small");
  require(model.k >= 1 && model.k <= model.experts, "model.k must lie in [1, experts]");
  require(model.blocks >= 0, "model.blocks must be >= 0");
  require(train.steps >= 0 && train.learning_rate >= 0 && train.batch_size >= 0, "train values must be >= 0");
  require(train.importance_weight >= 0 && train.load_weight >= 0, "aux weights must be >= 0");
  require(train.adversarial_epsilon >= 0 && train.adversarial_steps >= 1, "bad adversarial training settings");
  require(!attack.epsilon_grid.empty(), "attack.epsilon_grid is empty");
  for (std::size_t i = 0; i < attack.epsilon_grid.size(); ++i) {
    require(attack.epsilon_grid[i] >= 0, "attack.epsilon_grid has a negative entry");
    require(i == 0 || attack.epsilon_grid[i] >= attack.epsilon_grid[i - 1], "attack.epsilon_grid must ascend");
  }
  require(attack.steps >= 1, "attack.steps must be >= 1");
  require(attack.objective == "ce" || attack.objective == "ce+aux", "attack.objective must be ce or ce+aux");
  require(attack.aux_weight >= 0 && attack.max_examples >= 0, "attack values must be >= 0");
  require(!sweep.experts.empty(), "sweep.experts is empty");
  for (int e : sweep.experts) require(e >= 1, "sweep.experts entries must be >= 1");
  require(sweep.wide_dense_hidden >= 0, "sweep.wide_dense_hidden must be >= 0");
  require(output.format == "csv" || output.format == "json" || output.format == "both",
          "output.format must be csv, json or both");
}

Config parse_config(std::string_view text) {
  Config cfg;
  auto table = fields(cfg);
  std::string section = "general";
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ParseError(line, "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      const bool known = std::any_of(table.begin(), table.end(), [&](const Field& f) { return f.section == section; });
      if (!known) throw ParseError(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value', got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "missing key");
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Field& f) { return f.section == section && f.key == key; });
    if (it == table.end()) throw ParseError(line, "unknown key '" + key + "' in [" + section + "]");
    assign(*it, value, line);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

nlohmann::ordered_json config_to_json(const Config& cfg) {
  Config copy = cfg;
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& f : fields(copy)) {
    auto& dst = out[f.section][f.key];
    std::visit([&](auto* p) { dst = *p; }, f.slot);
  }
  return out;
}

std::string config_to_text(const Config& cfg) {
  Config copy = cfg;
  std::string out, section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + render(f.slot) + "\n";
  }
  return out;
}

}  // namespace moerob
