#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace wproj {

inline constexpr int kReportSchemaVersion = 1;

/// Shortest decimal text that parses back to the same double ("inf"/"-inf"/"nan" for non-finite).
std::string format_double(double v);

/// Parses text written by format_double (or any decimal number); throws InputError.
double parse_double(std::string_view text);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

/// Writes to a sibling temporary file and renames it over `path`. Creates
/// parent directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace wproj
