#include "forge/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "forge/errors.hpp"

namespace forge {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

bool looks_like_int(const std::string& s) {
  if (s.empty()) return false;
  size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

ConfigFile::Value parse_scalar(const std::string& raw, int line_no) {
  const std::string s = trim(raw);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  if (s == "true") return true;
  if (s == "false") return false;
  if (looks_like_int(s)) return static_cast<long long>(std::stoll(s));
  try {
    size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos == s.size()) return d;
  } catch (const std::exception&) {
  }
  fail("ConfigError", "line " + std::to_string(line_no) + ": cannot parse value '" + s + "'");
}

ConfigFile::Value parse_value(const std::string& raw, int line_no) {
  const std::string s = trim(raw);
  if (s.empty()) fail("ConfigError", "line " + std::to_string(line_no) + ": empty value");
  if (s.front() != '[') return parse_scalar(s, line_no);

  require(s.back() == ']', "ConfigError",
          "line " + std::to_string(line_no) + ": unterminated array");
  const std::string inner = s.substr(1, s.size() - 2);
  std::vector<std::string> items;
  std::string cur;
  bool quoted = false;
  for (char ch : inner) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));

  bool all_numeric = !items.empty();
  for (const auto& it : items)
    if (!it.empty() && (it.front() == '"' || it == "true" || it == "false"))
      all_numeric = false;
  if (all_numeric) {
    std::vector<double> out;
    for (const auto& it : items)
      out.push_back(std::get<double>(
          std::holds_alternative<long long>(parse_scalar(it, line_no))
              ? ConfigFile::Value(static_cast<double>(
                    std::get<long long>(parse_scalar(it, line_no))))
              : parse_scalar(it, line_no)));
    return out;
  }
  std::vector<std::string> out;
  for (const auto& it : items) {
    const auto v = parse_scalar(it, line_no);
    if (std::holds_alternative<std::string>(v))
      out.push_back(std::get<std::string>(v));
    else
      out.push_back(it);
  }
  return out;
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', "ConfigError",
              "line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      require(!section.empty(), "ConfigError",
              "line " + std::to_string(line_no) + ": empty section name");
      cfg.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, "ConfigError",
            "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), "ConfigError",
            "line " + std::to_string(line_no) + ": empty key");
    cfg.sections_[section][key] = parse_value(line.substr(eq + 1), line_no);
    cfg.key_order_[section].push_back(key);
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("ConfigError", "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

const ConfigFile::Value& ConfigFile::lookup(const std::string& section,
                                            const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end() || !s->second.count(key))
    fail("ConfigError", "missing config key [" + section + "] " + key);
  return s->second.at(key);
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key) const {
  const auto& v = lookup(section, key);
  require(std::holds_alternative<std::string>(v), "ConfigError",
          "[" + section + "] " + key + " is not a string");
  return std::get<std::string>(v);
}

std::string ConfigFile::get_str(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
  return has(section, key) ? get_str(section, key) : fallback;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key) const {
  const auto& v = lookup(section, key);
  require(std::holds_alternative<long long>(v), "ConfigError",
          "[" + section + "] " + key + " is not an integer");
  return std::get<long long>(v);
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
  const auto& v = lookup(section, key);
  if (std::holds_alternative<long long>(v))
    return static_cast<double>(std::get<long long>(v));
  require(std::holds_alternative<double>(v), "ConfigError",
          "[" + section + "] " + key + " is not a number");
  return std::get<double>(v);
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const auto& v = lookup(section, key);
  require(std::holds_alternative<bool>(v), "ConfigError",
          "[" + section + "] " + key + " is not a boolean");
  return std::get<bool>(v);
}

std::vector<std::string> ConfigFile::get_str_list(const std::string& section,
                                                  const std::string& key) const {
  const auto& v = lookup(section, key);
  require(std::holds_alternative<std::vector<std::string>>(v), "ConfigError",
          "[" + section + "] " + key + " is not a string array");
  return std::get<std::vector<std::string>>(v);
}

std::vector<double> ConfigFile::get_double_list(const std::string& section,
                                                const std::string& key) const {
  const auto& v = lookup(section, key);
  require(std::holds_alternative<std::vector<double>>(v), "ConfigError",
          "[" + section + "] " + key + " is not a numeric array");
  return std::get<std::vector<double>>(v);
}

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
  const auto it = key_order_.find(section);
  return it == key_order_.end() ? std::vector<std::string>{} : it->second;
}

}  // namespace forge
