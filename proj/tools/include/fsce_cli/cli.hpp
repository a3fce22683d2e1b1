#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fsce::cli {

// Runs one command line (args excludes the program name). Returns the process
// exit code: 0 success, 1 validation error, 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fsce::cli
