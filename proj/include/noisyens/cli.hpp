#pragma once

#include <string>
#include <vector>

#include "noisyens/harness.hpp"

namespace noisyens::cli {

/// Exit codes: 0 success, 2 config/usage error, 3 numerical failure.
int run(const std::vector<std::string>& args);

/// Strict JSON mirror of ExperimentConfig; unknown keys are rejected and
/// absent keys keep their defaults (k = 5, realizations = 100,
/// noisy_fraction = 1).
ExperimentConfig parse_config(const std::string& path);

/// Grid strings: "a" (one point), "a,b,c" (list) or "start:step:stop"
/// (inclusive of stop when it lands on the lattice within 1e-9).
std::vector<double> parse_grid(const std::string& text);
std::vector<int> parse_int_grid(const std::string& text);

/// Flag names registered for a subcommand; backs the help-registry test.
std::vector<std::string> registered_flags(const std::string& subcommand);

std::vector<std::string> subcommand_names();

}  // namespace noisyens::cli
