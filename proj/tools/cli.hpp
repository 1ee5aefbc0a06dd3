#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <iosfwd>
#include <string>
#include <vector>

namespace wmlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// `args` excludes the program name.
int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace wmlab
