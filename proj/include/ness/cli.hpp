#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace ness::cli {

enum ExitCode : int { kPass = 0, kViolation = 1, kConfigError = 2, kRuntimeAbort = 3 };

struct RunOptions {
  std::string out_dir;                // empty: take "out" from the config, else ./out
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::size_t threads = 0;            // 0 keeps the current worker count
  bool dry_run = false;               // validate only, write nothing
  bool write_files = true;
};

struct CommandResult {
  int exit_code = kPass;
  nlohmann::json report;
};

/// Elliptic and/or kinetic constants from declared parameters.
CommandResult cmd_constants(const nlohmann::json& config, const RunOptions& opts);

/// Runs the estimator battery for one scenario and compares against the bounds.
CommandResult cmd_verify(const nlohmann::json& config, const RunOptions& opts);

/// Cartesian grid over dotted keys of a base config; one child report per point.
CommandResult cmd_sweep(const nlohmann::json& config, const RunOptions& opts);

/// Writes coupled or single trajectories as CSV.
CommandResult cmd_dump_trajectories(const nlohmann::json& config, const RunOptions& opts);

/// Entry point behind the executable.
int run(int argc, char** argv);

}  // namespace ness::cli
