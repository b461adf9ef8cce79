#pragma once

#include <string>
#include <vector>

namespace drmpc {

/// Command-line entry point, callable in-process for testing. `args` is
/// the argument list without the program name. Exit codes: 0 success;
/// 1 completed but a required invariant or report threshold failed;
/// 2 configuration error; 3 data or artifact error; 4 solver failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace drmpc
