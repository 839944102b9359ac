#pragma once

// qfb <engine> --config PATH [--output PATH] [--seed N] [--ntraj N]
//     [--threads N] [--quiet]

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qfb/config.hpp"
#include "qfb/run.hpp"

namespace qfb {

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open quantum systems under photodetection feedback"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string output;
    std::uint64_t seed = 0;
    long ntraj = 0;
    unsigned threads = 0;
    bool quiet = false;
  };
  Flags flags;
  std::vector<std::pair<Engine, CLI::App*>> subs;
  for (Engine e : {Engine::master, Engine::trajectory, Engine::oracle, Engine::compare}) {
    CLI::App* sub = app.add_subcommand(engine_name(e), std::string("run the ") + engine_name(e) +
                                                           " engine");
    sub->add_option("--config", flags.config, "JSON run configuration")->required();
    sub->add_option("--output", flags.output, "CSV output path (overrides config)");
    sub->add_option("--seed", flags.seed, "master seed (overrides config)");
    sub->add_option("--ntraj", flags.ntraj, "number of trajectories (overrides config)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--threads", flags.threads, "worker threads, 0 = all cores");
    sub->add_flag("--quiet", flags.quiet, "do not echo the effective config");
    subs.emplace_back(e, sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitConfig;
  }

  ConfigOverrides overrides;
  CLI::App* chosen = nullptr;
  for (auto& [e, sub] : subs) {
    if (sub->parsed()) {
      overrides.engine = e;
      chosen = sub;
    }
  }
  if (chosen->count("--output")) overrides.output = flags.output;
  if (chosen->count("--seed")) overrides.seed = flags.seed;
  if (chosen->count("--ntraj")) overrides.n_traj = flags.ntraj;
  if (chosen->count("--threads")) overrides.threads = flags.threads;

  std::ifstream file(flags.config, std::ios::binary);
  if (!file) {
    err << "config error: cannot read '" << flags.config << "'\n";
    return kExitConfig;
  }
  std::stringstream text;
  text << file.rdbuf();

  RunConfig cfg;
  try {
    cfg = parse_config(text.str(), overrides);
  } catch (const ConfigError& e) {
    for (const auto& p : e.problems()) err << "config error: " << p << '\n';
    return kExitConfig;
  }
  if (!flags.quiet) err << "effective config: " << effective_config(cfg).dump() << '\n';
  return run(cfg, err);
}

}  // namespace qfb
