#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hcite {

/// Base for every error the library raises on bad input or failed I/O.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Number of Unicode code points in a UTF-8 string.
std::size_t utf8_length(std::string_view s);

/// Half-away-from-zero rounding to `places` decimals. A relative nudge of a few
/// ulps keeps decimal ties such as 0.9195 from falling on the wrong side after
/// binary summation.
double round_to(double value, int places);

/// Stable 64-bit hashing for reproducible pseudo-random decisions.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t mix64(std::uint64_t x);
/// Maps a hash to [0, 1) with 53 bits of precision.
double unit_interval(std::uint64_t h);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// UTC timestamp, ISO-8601, second precision.
std::string utc_timestamp();

}  // namespace hcite
