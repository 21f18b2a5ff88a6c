#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace oscope {

using Json = nlohmann::json;

/// Whole-file read; IoError if the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Calls `fn(line_number, json)` for each non-blank line (1-based numbering).
/// A line that fails to parse raises FormatError naming the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const Json&)>& fn);

/// printf("%.*f") without locale surprises.
std::string fixed(double v, int digits);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

/// Compact one-line dump with a trailing newline.
std::string jsonl_line(const Json& j);

}  // namespace oscope
