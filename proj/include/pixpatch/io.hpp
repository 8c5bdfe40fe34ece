#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace pixpatch {

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never observes a truncated file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Throws IoError if the file cannot be read.
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Exact parse of a full token (accepts subnormals). Throws IoError.
double parse_double(std::string_view text);

std::string to_hex(std::uint64_t value);
std::uint64_t from_hex(std::string_view text);

/// Current UTC time as an ISO-8601 string.
std::string utc_timestamp();

} // namespace pixpatch
