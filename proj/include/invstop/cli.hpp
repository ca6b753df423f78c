#pragma once

#include <iosfwd>

namespace invstop {

enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_config = 2,
    exit_precondition = 3,
    exit_no_root = 4,
    exit_verification = 5,
};

inline constexpr const char* tool_version = "0.1.0";

/// Entry point of the `invstop` tool; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace invstop
