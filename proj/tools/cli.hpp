#pragma once

#include <string>
#include <vector>

namespace spamm::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNumericError = 3 };

/// Entry point of the `spamm` executable; returns the process exit code.
int run(int argc, const char* const* argv);

/// Convenience overload for tests: args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace spamm::cli
