#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace digzsl {

std::string trim(std::string_view s);
std::string strip_comment(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string to_lower(std::string_view s);

// Parsers that throw ConfigError carrying `key` and `line` for diagnostics.
double parse_double(const std::string& value, const std::string& key, std::size_t line = 0);
std::uint64_t parse_unsigned(const std::string& value, const std::string& key, std::size_t line = 0);
bool parse_bool(const std::string& value, const std::string& key, std::size_t line = 0);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace digzsl
