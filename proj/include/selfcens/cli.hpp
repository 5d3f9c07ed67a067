#pragma once

#include <iosfwd>

namespace selfcens {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,
  kExitConvergence = 2,
  kExitIdentification = 3,
};

// Entry point of the `selfcens` tool; writes reports to `out` and diagnostics to `err`.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace selfcens
