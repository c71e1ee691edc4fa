#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace forge {

// Minimal key-value config file: [section] headers, `key = value` lines,
// `#` comments. Values: "strings", integers, floats, booleans and flat
// [a, b, c] arrays. Enough structure for per-stage pipeline configs without
// pulling in a full TOML implementation.
class ConfigFile {
 public:
  using Value = std::variant<bool, long long, double, std::string,
                             std::vector<std::string>, std::vector<double>>;

  static ConfigFile parse_file(const std::filesystem::path& path);
  static ConfigFile parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_str(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int(const std::string& section, const std::string& key,
                    long long fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<std::string> get_str_list(const std::string& section,
                                        const std::string& key) const;
  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key) const;

  // Keys of one section, in file order.
  std::vector<std::string> keys(const std::string& section) const;

 private:
  const Value& lookup(const std::string& section, const std::string& key) const;
  std::map<std::string, std::map<std::string, Value>> sections_;
  std::map<std::string, std::vector<std::string>> key_order_;
};

}  // namespace forge
