#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flowrecon::app {

enum ExitCode : int { kOk = 0, kOtherError = 1, kConfigError = 2, kNumericError = 3, kIoError = 4 };

/// Runs the command line (args excludes the program name). Errors are
/// reported on `err` and mapped to an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowrecon::app
