#pragma once

#include <string>
#include <vector>

namespace envpred {

// Runs one CLI invocation (args exclude the program name). Returns the
// process exit status; all output goes to stdout/stderr.
int cli_run(const std::vector<std::string>& args);

}  // namespace envpred
