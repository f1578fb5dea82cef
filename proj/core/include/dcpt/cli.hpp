#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dcpt {

/// Command-line entry point. args excludes the program name. Returns 0 on
/// success, 1 on a usage or configuration error, 2 on a data error. All
/// diagnostics go to `err`; results are written to files only.
int run_cli(const std::vector<std::string>& args, std::ostream& err);

}  // namespace dcpt
