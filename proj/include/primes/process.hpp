#pragma once

#include <string>
#include <vector>

namespace primes {

struct ProcessResult {
    int exit_code = -1;
    std::string stdout_text;
    std::string stderr_text;
};

/// Runs argv[0] (resolved via PATH) without a shell and captures both output
/// streams. Throws IoError if the program cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv);

} // namespace primes
