#pragma once

#include <string>
#include <vector>

namespace attrib {

// Runs one CLI subcommand. Returns the process exit code:
// 0 success, 1 usage error, 2 data error, 3 numeric divergence.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace attrib
