#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lossyckpt::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNotConverged = 2, kModelInvalid = 3 };

/// Runs one subcommand (`solve`, `model`, `simulate`, `compress-bench`,
/// `probe`). `args` excludes the program name. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lossyckpt::cli
