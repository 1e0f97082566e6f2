#pragma once

// Command-line front end: run, rest, check and params subcommands.

#include <iosfwd>
#include <string>
#include <vector>

namespace tridomain {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // validation error, unknown flag, unreadable input
inline constexpr int kExitSolver = 2;   // solver failure or failed self-check

/// Environment variable that replaces the configured output directory.
inline constexpr const char* kOutputDirEnv = "TRIDOMAIN_OUTPUT_DIR";

/// `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tridomain
