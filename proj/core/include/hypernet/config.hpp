#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hypernet {

/// Line-oriented `key = value` configuration with `#` comments and dotted
/// keys for namespacing. Duplicate keys and malformed lines are errors;
/// unknown keys are rejected against a per-command allow-list.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& where = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated nonnegative integers (e.g. milestones).
  std::vector<std::size_t> get_uint_list(const std::string& key) const;

  std::vector<std::string> keys() const;

  /// ConfigError naming the first key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;

 private:
  std::map<std::string, std::string> values_;
  std::string where_;
};

}  // namespace hypernet
