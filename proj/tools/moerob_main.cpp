// Copyright 2026 The moerob Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "moerob/config.hpp"
#include "moerob/errors.hpp"
#include "moerob/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Robustness experiments for mixture-of-experts models"};
  std::string config_path, scenario, out_dir, format;
  std::optional<std::uint64_t> seed;
  bool print_config = false;
  app.add_option("--config", config_path, "config file (key = value with [section] headers)");
  app.add_option("--scenario", scenario, "scenario to run; overrides the config")
      ->check(CLI::IsMember(moerob::scenario_names()));
  app.add_option("--seed", seed, "global seed; overrides the config");
  app.add_option("--out", out_dir, "output directory; overrides the config");
  app.add_option("--format", format, "csv, json or both")->check(CLI::IsMember({"csv", "json", "both"}));
  app.add_flag("--print-config", print_config, "print the effective config and exit");
  CLI11_PARSE(app, argc, argv);

  try {
    moerob::Config cfg = config_path.empty() ? moerob::Config{} : moerob::load_config(config_path);
    if (!scenario.empty()) cfg.general.scenario = scenario;
    if (seed) cfg.general.seed = *seed;
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (!format.empty()) cfg.output.format = format;
    if (print_config) {
      std::cout << moerob::config_to_text(cfg);
      return 0;
    }
    const moerob::RunReport report = moerob::run_scenario(cfg);
    for (const auto& p : moerob::emit_results(report, cfg.output.dir, cfg.output.format)) std::cout << p << '\n';
    if (!report.verified) {
      std::cerr << report.scenario << ": bound check failed\n";
      return 1;
    }
    return 0;
  } catch (const moerob::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
