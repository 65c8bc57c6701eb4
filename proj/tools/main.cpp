#include <iostream>

#include "CLI11.hpp"
#include "stochunfold/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Stochastic unfolding on lattice networks: operator checks, correctors, static and evolution studies"};
  app.require_subcommand(1);
  su::CommandLine cl;
  std::uint64_t seed = 0;
  for (const char* name : {"verify", "korn", "corrector", "static", "evolve"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", cl.config_path, "JSON run configuration")->required();
    sub->add_option("--out", cl.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--threads", cl.threads, "worker threads (0 = hardware)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    cl.command = sub->get_name();
    cl.has_seed = sub->count("--seed") > 0;
  }
  cl.seed = seed;
  return su::run_command(cl, std::cout, std::cerr);
}
