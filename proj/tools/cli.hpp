#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cxr::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kDataIntegrity = 3,
    kNumeric = 4,
};

/// Runs one command line (without the program name) and returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cxr::cli
