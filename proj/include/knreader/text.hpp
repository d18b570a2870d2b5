#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace knreader::text {

std::vector<std::string> split_whitespace(std::string_view line);
std::vector<std::string> split(std::string_view line, char separator);
std::string to_lower(std::string_view s);
std::string join(const std::vector<std::string>& tokens, std::string_view separator);
std::string_view trim(std::string_view s);

}  // namespace knreader::text
