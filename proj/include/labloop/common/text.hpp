#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace labloop::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
/// Lowercased alphanumeric tokens; every other character separates tokens.
std::vector<std::string> word_tokens(std::string_view s);
std::size_t word_count(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace labloop::text
