#pragma once

#include <iosfwd>

namespace brainseg::cli {

/// Exit codes: 0 success, 1 verification mismatch, 2 configuration error,
/// 3 data error, 4 runtime error.
inline constexpr int kExitMismatch = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Entry point of the `brainseg` tool; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace brainseg::cli
