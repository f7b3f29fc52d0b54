#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace neat::cli {

/// Runs the command line tool with `args` (program name excluded). Normal
/// output goes to `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace neat::cli
