#pragma once

#include <ostream>

namespace lmwt {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitInput = 3,
  kExitNumeric = 4,
};

/// Entry point of the `lmwt` tool. Subcommands: train, eval, bench, haar,
/// export-coeffs. Normal output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace lmwt
