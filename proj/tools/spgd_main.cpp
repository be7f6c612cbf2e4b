#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spgd/harness.hpp"

namespace {

// Shared --seeds/--epochs/--out overrides applied after the config loads.
struct Overrides {
  std::string config_path;
  std::string out_dir;
  std::string seeds;
  long epochs = -1;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& ov, bool needs_config) {
  auto* opt = cmd->add_option("--config", ov.config_path, "config file path");
  if (needs_config) opt->required();
  cmd->add_option("--out", ov.out_dir, "output directory override");
  cmd->add_option("--seeds", ov.seeds, "comma-separated seed override");
  cmd->add_option("--epochs", ov.epochs, "epoch count override");
  cmd->add_flag("--quiet", ov.quiet, "suppress progress output");
}

spgd::RunConfig load_with_overrides(const Overrides& ov) {
  spgd::RunConfig cfg = spgd::load_config(ov.config_path);
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  if (ov.epochs > 0) cfg.epochs = ov.epochs;
  if (!ov.seeds.empty()) {
    cfg.seeds.clear();
    std::string cur;
    for (char c : ov.seeds + ",") {
      if (c == ',') {
        if (!cur.empty()) cfg.seeds.push_back(std::stoull(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (cfg.seeds.empty()) throw spgd::InvalidConfig("empty --seeds override");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SVD-preconditioned gradient descent benchmark harness"};
  app.require_subcommand(1);

  Overrides run_ov, cmp_ov, probe_ov;
  CLI::App* cmd_run = app.add_subcommand("run", "execute all config cells");
  add_common(cmd_run, run_ov, true);
  CLI::App* cmd_cmp =
      app.add_subcommand("compare", "side-by-side method comparison");
  add_common(cmd_cmp, cmp_ov, true);
  CLI::App* cmd_check =
      app.add_subcommand("check", "run the built-in verification suite");
  CLI::App* cmd_probe =
      app.add_subcommand("probe", "spectral probe of the problem at theta0");
  add_common(cmd_probe, probe_ov, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(cmd_run)) {
      const spgd::RunConfig cfg = load_with_overrides(run_ov);
      return spgd::cli_run(cfg, run_ov.quiet, std::cout);
    }
    if (app.got_subcommand(cmd_cmp)) {
      const spgd::RunConfig cfg = load_with_overrides(cmp_ov);
      return spgd::cli_compare(cfg, cmp_ov.quiet, std::cout);
    }
    if (app.got_subcommand(cmd_check)) {
      return spgd::cli_check(std::cout);
    }
    if (app.got_subcommand(cmd_probe)) {
      const spgd::RunConfig cfg = load_with_overrides(probe_ov);
      return spgd::cli_probe(cfg, std::cout);
    }
  } catch (const spgd::InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
