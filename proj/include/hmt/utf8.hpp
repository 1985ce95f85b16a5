// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hmt::utf8 {

/// Splits valid UTF-8 into code points; throws FormatError on malformed input.
std::u32string decode(std::string_view text);
std::string encode(char32_t cp);
std::string encode(std::u32string_view cps);
/// One UTF-8 string per code point.
std::vector<std::string> split_chars(std::string_view text);
bool is_space(char32_t cp);

}  // namespace hmt::utf8
