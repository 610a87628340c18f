#pragma once

#include <string>
#include <vector>

namespace ptri::cli {

// Parses and executes one command line (without the program name). Returns
// the process exit code; throws ptri::Error for category-mapped failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace ptri::cli
