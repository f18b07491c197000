#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynrecon {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitSolver = 3;

/// Runs one `dynrecon` subcommand. `args` excludes the program name.
/// Returns the process exit code; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dynrecon
