#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ddap {

/// Exit codes of the command-line entry point.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `ddap` command line. `args` excludes the program name. Failures
/// print one line, "error: <code>: <detail>", to `err`.
int cli_run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ddap
