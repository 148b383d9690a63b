#pragma once

#include <string>
#include <vector>

namespace nesti {

// Entry point behind the `nesti` binary. `args` excludes the program name.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace nesti
