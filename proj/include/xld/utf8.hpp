#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace xld::utf8 {

// Splits into code-point substrings. Invalid bytes become single-byte pieces.
std::vector<std::string> split_chars(std::string_view text);

std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
std::string encode(char32_t cp);

bool is_valid(std::string_view text);

}  // namespace xld::utf8
