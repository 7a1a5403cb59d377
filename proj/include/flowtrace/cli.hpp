#pragma once

#include <string>
#include <vector>

namespace flowtrace {

/// Parse arguments, dispatch the subcommand, write outputs.
/// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numeric failure.
int run_cli(const std::vector<std::string>& args);

} // namespace flowtrace
