#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cral::text {

// Decodes UTF-8 into code points; malformed bytes become U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);

// Unicode default case folding, code point by code point.
std::string case_fold(std::string_view s);

}  // namespace cral::text
