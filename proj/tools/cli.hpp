#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vpdet::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitNoDominant = 2;

// Name of the environment variable holding a default config file path.
inline constexpr const char* kConfigEnv = "VPDET_CONFIG";

/// Runs one command line (args[0] is the program name). Ranked query output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vpdet::cli
