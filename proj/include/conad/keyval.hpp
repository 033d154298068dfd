#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "conad/common.hpp"

namespace conad {

/// Plain-text `key = value` configuration, one entry per line.
/// `#` starts a comment; blank lines are ignored; later keys win.
/// Used for CSV schema specs and for CLI `--config` override files.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline KeyValues parse_keyvals(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail("%s:%d: expected 'key = value', got '%s'", origin.c_str(), lineno, line.c_str());
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail("%s:%d: empty key", origin.c_str(), lineno);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline KeyValues load_keyvals(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '%s'", path.c_str());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_keyvals(buf.str(), path);
}

/// Comma-separated list value, entries trimmed, empties dropped.
inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace conad
