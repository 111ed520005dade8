#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace glintkit {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPipelineError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. `args` excludes the program name. Results go to
/// files named by the flags; diagnostics go to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glintkit
