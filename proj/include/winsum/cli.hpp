#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace winsum {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Name of the environment variable holding the default config file path.
inline constexpr const char* kConfigEnv = "WINSUM_CONFIG";

// Entry point for the `winsum` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace winsum
