#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ttnmtl {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,
    kExitUsage = 2,
    kExitNumerical = 3,
};

/// Entry point of the ttnmtl command: gen-data, train, gradcheck, plot.
/// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace ttnmtl
