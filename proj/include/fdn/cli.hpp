#pragma once

#include <ostream>

namespace fdn {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses `argv` (argv[0] is the program name) and runs one subcommand:
/// gen-data, train, benchmark-synthetic, evaluate, param-count,
/// export-features.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fdn
