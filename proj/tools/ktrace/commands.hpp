#pragma once

#include <iosfwd>

#include "ktrace/run_config.hpp"

namespace ktrace {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,      // anything not covered below
    kUsage = 2,        // bad flags or config
    kInput = 3,        // unreadable or malformed data files
    kCheckpoint = 4,   // checkpoint missing, corrupt or wrong version
    kNumeric = 5,      // training produced non-finite values
};

/// Runs one resolved command, writing files under config.out and a short
/// summary to `log`. Errors propagate as exceptions.
void dispatch(const RunConfig& config, std::ostream& log);

/// Full command line handling: parse, dispatch, map errors to exit codes
/// with a one-line diagnostic on `err`.
int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err);

}  // namespace ktrace
