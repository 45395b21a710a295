#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qpi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `qpignn` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on a usage error, 2 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace qpi::cli
