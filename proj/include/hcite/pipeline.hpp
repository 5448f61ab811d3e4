#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hcite::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Full command line including the program name. Returns the process exit
/// status: 0 success, 1 runtime failure, 2 usage error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

/// Root of the shipped data files: $HCITE_DATA_DIR if set, otherwise the
/// directory baked in at build time.
std::filesystem::path data_dir();

}  // namespace hcite::cli
