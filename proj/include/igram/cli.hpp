#pragma once

#include <ostream>

namespace igram::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

// Runs one command line (argv[0] is the program name). Results go to `out`,
// diagnostics and usage text to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace igram::cli
