// rpg: command-line driver for the synthetic palmprint pipeline.
//
//   rpg <subcommand> --config FILE [--seed N] [--out DIR] [--threads N]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rpg/pipeline/commands.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crease-conditioned synthetic palmprint pipeline"};
  app.set_version_flag("--version", std::string(RPG_VERSION));
  app.require_subcommand(1, 1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  for (const auto& name : rpg::pipeline::subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key=value config file")->required();
    sub->add_option("--seed", seed, "override master_seed");
    sub->add_option("--out", out_dir, "artifact directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads for identity-parallel stages")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    rpg::pipeline::Context ctx;
    ctx.level = rpg::pipeline::log_level_from_env();
    ctx.cfg = rpg::pipeline::load_config(config_path);
    if (app.get_subcommands().front()->count("--seed")) ctx.cfg.master_seed = seed;
    ctx.out = out_dir;
    ctx.threads = threads;
    rpg::pipeline::run_subcommand(name, ctx);
  } catch (const rpg::ConfigError& e) {
    std::cerr << "rpg " << name << ": config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "rpg " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
