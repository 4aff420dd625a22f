#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qgfbsde::cli {

enum ExitCode : int {
    ok = 0,
    certificate_failed = 1, // also: hypotheses not satisfied
    config_error = 2,
    numerical_error = 3,
};

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace qgfbsde::cli
