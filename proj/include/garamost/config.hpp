#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace garamost {

// Flat `key = value` text. Blank lines and `#` comments are ignored; a
// malformed line or a repeated key raises ConfigError naming the line.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin = "config");
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& kv);

}  // namespace garamost
