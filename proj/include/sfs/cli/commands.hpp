#pragma once

namespace sfs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the sf-sampler tool. Returns 0, 2 (invalid config or
/// arguments) or 3 (run finished but failed its gate).
int run_cli(int argc, const char* const* argv);

}  // namespace sfs::cli
