#pragma once

#include <ostream>

namespace scm {

// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitEstimation = 4;

// Entry point shared by the scm binary and the tests. Subcommands:
// aggregate, fit, placebo, simulate, power, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scm
