#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bdi::csv {

using Row = std::vector<std::string>;

/// RFC 4180 style parsing: quoted fields, doubled quotes, CRLF or LF.
std::vector<Row> parse(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Shortest representation that round-trips to the same double.
std::string format_double(double v);

/// Empty string for nullopt or NaN.
std::string format_optional(std::optional<double> v);

std::optional<double> parse_optional_double(std::string_view field);

std::string quote_if_needed(std::string_view field);

/// Joins fields with commas, quoting as needed, and appends '\n'.
std::string join(const Row& row);

}  // namespace bdi::csv
