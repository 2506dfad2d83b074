#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace adapt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kEnvironment = 2, kPartial = 3 };

/// Runs the command line `args` (without the program name). Diagnostics go to `err`,
/// tables to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace adapt::cli
