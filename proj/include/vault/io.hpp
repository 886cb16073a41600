#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace vault {

using json = nlohmann::json;

/// Reads a whole file; throws vault::Error if it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never observe a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Calls `fn(line_number, parsed)` for every non-blank line. Line numbers are
/// 1-based. A malformed line raises ParseError naming the line.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(std::size_t, const json&)>& fn);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest decimal that round-trips the float, widened to double; keeps
/// JSON output free of float->double noise digits.
double widen_shortest(float value);

}  // namespace vault
