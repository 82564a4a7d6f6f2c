// Copyright 2026 The born-branch Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "born_branch/cli_runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"born-branch: branching processes with small-signal truncation"};
  std::string experiment, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool plot = false;
  app.add_option("experiment", experiment, "tree | lcg | walk | diffusion | endogenous | measure | demo_intro")
      ->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--workers", workers, "worker threads (default: BORN_BRANCH_WORKERS or all cores)");
  app.add_flag("--plot", plot, "also write plot.svg");
  app.add_option("--out", out_dir, "output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto config = born::load_config(config_path);
    if (config.experiment != experiment)
      born::fail(born::ErrorKind::ConfigError, "key 'experiment': config says '" + config.experiment +
                                                   "' but the command line asked for '" + experiment + "'");
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (plot) config.plot = true;
    if (workers && *workers == 0) born::fail(born::ErrorKind::ConfigError, "key 'workers': must be positive");
    const unsigned n_workers = workers ? *workers : config.workers ? *config.workers : born::default_workers();
    const auto status = born::run(config, n_workers);
    for (const auto& [name, verdict] : status.results["checks"].items())
      std::cout << name << ": " << verdict.get<std::string>() << '\n';
    std::cout << "wrote " << config.out_dir << "/results.json\n";
    return status.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "born-branch: " << e.what() << '\n';
    return 1;
  }
}
