#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "stochunfold/config.hpp"
#include "stochunfold/eris.hpp"
#include "stochunfold/statics.hpp"

namespace su {

/// Study inputs resolved from a run configuration; throw ConfigError.
StaticStudyConfig static_study_config(const RunConfig& cfg);
EvolutionStudyConfig evolution_study_config(const RunConfig& cfg);

/// Each command writes its files into out_dir and a short summary to log.
/// Return value: 0 success, 1 failed check or runtime error.
int cmd_verify(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);
int cmd_korn(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);
int cmd_corrector(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);
int cmd_static(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);
int cmd_evolve(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

struct CommandLine {
  std::string command;
  std::string config_path;
  std::string out_dir = ".";
  bool has_seed = false;
  std::uint64_t seed = 0;
  int threads = -1;  ///< -1 keeps the config value
};

/// Loads the config and dispatches. Configuration errors print a JSON object
/// to err and return 2.
int run_command(const CommandLine& cl, std::ostream& log, std::ostream& err);

}  // namespace su
