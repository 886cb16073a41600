#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vault {

/// Lowercases ASCII letters and splits on runs of characters that are not
/// ASCII alphanumerics. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// survive intact.
std::vector<std::string> tokenize(std::string_view text);

/// Number of Unicode scalar values in a UTF-8 string (continuation bytes are
/// not counted).
std::size_t utf8_length(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

}  // namespace vault
