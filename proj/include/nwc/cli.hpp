#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nwc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitFormat = 3,
  kExitNumeric = 4,
  kExitCorruption = 5,
};

/// Runs one `nwc` command. args[0] is the program name. The resolved
/// configuration is logged to `err` as one JSON line before work starts.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nwc::cli
