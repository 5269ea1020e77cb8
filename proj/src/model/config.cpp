#include "garamost/config.hpp"

#include <fstream>
#include <sstream>

#include "garamost/errors.hpp"

namespace garamost {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, value).second) throw ConfigError(where + ": key '" + key + "' given twice");
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : kv) f << k << " = " << v << '\n';
  if (!f) throw std::runtime_error("write to " + path.string() + " failed");
}

}  // namespace garamost
