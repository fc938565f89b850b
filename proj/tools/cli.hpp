#pragma once

#include <ostream>

#include "mfg/error.hpp"

namespace mfg::cli {

/// 1 for usage and configuration problems, 2 for mathematical failures.
int exit_code_for(ErrorKind kind);

/// Runs one `mfg` command line. Results go to `out`, diagnostics to `err`;
/// the return value is the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfg::cli
