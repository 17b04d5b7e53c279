#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bseg/config.hpp"
#include "bseg/errors.hpp"
#include "bseg/harness.hpp"
#include "bseg/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfigError = 2;

struct Common {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
};

bseg::RunConfig resolve(const Common& c) {
  std::optional<bseg::Preset> preset;
  if (!c.preset.empty()) preset = bseg::preset_from_string(c.preset);
  bseg::RunConfig cfg = c.config.empty() ? bseg::preset_config(preset.value_or(bseg::Preset::desk_test))
                                         : bseg::load_run_config(c.config, preset);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config");
  cmd->add_option("--preset", c.preset, "big, mobile or desk-test");
  cmd->add_option("--seed", c.seed, "RNG seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory");
}

void print_paths(const std::vector<std::string>& paths) {
  for (const std::string& p : paths) std::cout << "wrote " << p << "\n";
}

int report(const std::vector<bseg::CheckResult>& checks) {
  int failed = 0;
  for (const bseg::CheckResult& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    failed += c.pass ? 0 : 1;
  }
  std::cout << checks.size() - static_cast<std::size_t>(failed) << "/" << checks.size()
            << " checks passed\n";
  return failed == 0 ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bottleneck-encoder segmentation toolkit: cost model, forward pass, pruning sweeps"};
  app.require_subcommand(1);

  std::string flops_config, flops_out = "out";
  auto* flops = app.add_subcommand("flops", "component FLOPs report (CSV + JSON)");
  flops->add_option("--config", flops_config, "JSON list of component configs")->required();
  flops->add_option("--out", flops_out, "output directory");

  Common fwd, sweep;
  auto* forward = app.add_subcommand("forward", "seeded end-to-end forward pass summary");
  add_common(forward, fwd);
  auto* prune_sweep = app.add_subcommand("prune-sweep", "pruning strategies vs decoder FLOPs");
  add_common(prune_sweep, sweep);

  std::uint64_t verify_seed = 7;
  std::string inject;
  auto* verify = app.add_subcommand("verify", "oracle and invariant suite");
  auto* gradcheck = app.add_subcommand("gradcheck", "calibration gradient checks only");
  for (auto* cmd : {verify, gradcheck}) {
    cmd->add_option("--seed", verify_seed, "RNG seed");
    cmd->add_option("--inject", inject, "deliberate fault: deform-offset or grad-sign");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*flops) {
      print_paths(bseg::cmd_flops(flops_config, flops_out));
    } else if (*forward) {
      const bseg::RunConfig cfg = resolve(fwd);
      print_paths(bseg::cmd_forward(cfg, fwd.out.empty() ? cfg.out_dir : fwd.out));
    } else if (*prune_sweep) {
      const bseg::RunConfig cfg = resolve(sweep);
      print_paths(bseg::cmd_prune_sweep(cfg, sweep.out.empty() ? cfg.out_dir : sweep.out));
    } else if (*verify) {
      return report(bseg::run_verify(verify_seed, bseg::fault_from_string(inject)));
    } else if (*gradcheck) {
      return report(bseg::gradient_checks(verify_seed, bseg::fault_from_string(inject)));
    }
  } catch (const bseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kOk;
}
