#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dewarp::cli {

enum ExitCode : int {
    kOk = 0,
    kBadArguments = 2,
    kGenerationFailure = 3,
    kNumericFailure = 4,
    kNoObjective = 5,
    kUnreadableInput = 6,
    kGradcheckFailure = 7,
};

/// Runs one command line (without the program name). Output goes to `out`,
/// diagnostics to `err`; the return value is the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dewarp::cli
