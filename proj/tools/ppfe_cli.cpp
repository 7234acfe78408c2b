#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ppfe/config.hpp"
#include "ppfe/error.hpp"
#include "ppfe/experiment.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::string seeds;
  std::size_t threads = 1;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seeds", c.seeds, "comma-separated seeds, overrides the config");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--verbose", c.verbose, "progress on stderr");
}

/// One JSON line on stderr; the exit code tells the error family apart.
int report(const std::string& type, const std::string& message, const std::string* pointer = nullptr) {
  nlohmann::json j;
  j["error"]["type"] = type;
  j["error"]["message"] = message;
  if (pointer) j["error"]["pointer"] = *pointer;
  std::cerr << j.dump() << '\n';
  if (type == "config") return 2;
  if (type == "io") return 3;
  if (type == "parse") return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive personalized federated ensembles: experiment runner"};
  app.require_subcommand(1);

  Common c;
  auto* synthetic = app.add_subcommand("synthetic", "linear-regression sweep over clients and personalization ratios");
  auto* federated = app.add_subcommand("federated", "federated comparison of the configured methods");
  auto* ablation = app.add_subcommand("ablation", "federated run with the ablation method set by default");
  auto* stats = app.add_subcommand("partition-stats", "per-client sample and label statistics");
  auto* bound = app.add_subcommand("bound", "capacity terms of the stage plan");
  auto* plot = app.add_subcommand("plot", "re-render summary.csv and plots from the CSVs in --out");
  for (auto* s : {synthetic, federated, ablation, stats, bound}) add_common(s, c, true);
  add_common(plot, c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what());
  }

  try {
    ppfe::exp::RunOptions ro;
    ro.threads = c.threads;
    ro.verbose = c.verbose;

    if (plot->parsed() && c.config.empty()) {
      if (c.out.empty()) return report("usage", "plot needs --out or --config");
      ppfe::exp::render_outputs(c.out);
      return 0;
    }

    auto cfg = ppfe::config::load_config(c.config, ablation->parsed());
    if (!c.seeds.empty()) cfg.seeds = ppfe::config::parse_seed_list(c.seeds);
    ro.out = !c.out.empty() ? std::filesystem::path(c.out) : cfg.output.value_or("out");

    if (synthetic->parsed()) ppfe::exp::run_synthetic(cfg, ro);
    else if (federated->parsed() || ablation->parsed()) ppfe::exp::run_federated(cfg, ro);
    else if (stats->parsed()) ppfe::exp::run_partition_stats(cfg, ro, std::cout);
    else if (bound->parsed()) ppfe::exp::run_bound(cfg, ro, std::cout);
    else if (plot->parsed()) ppfe::exp::render_outputs(ro.out);
    return 0;
  } catch (const ppfe::ConfigError& e) {
    return report("config", e.what(), &e.pointer());
  } catch (const ppfe::IoError& e) {
    return report("io", e.what());
  } catch (const ppfe::ParseError& e) {
    return report("parse", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return report("io", e.what());
  } catch (const std::exception& e) {
    return report("runtime", e.what());
  }
}
