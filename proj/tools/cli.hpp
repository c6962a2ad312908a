#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wproj::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,
  kDataError = 2,
  kNumericError = 3,
};

/// Runs the command line `args` (without the program name). Reports go to
/// `out`, diagnostics and warnings to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wproj::cli
