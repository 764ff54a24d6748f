// Flat key-value configuration files: one `key = value` per line, `#` starts
// a comment. Commands validate against an allowed-key list so typos fail
// loudly, and every run records the config's hash in its manifest.
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "convasr/common.hpp"

namespace convasr {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_text(const std::string& text) {
    KeyValueConfig cfg;
    cfg.raw_text_ = text;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      }
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config is missing key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not a number: " + it->second);
    }
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' is not a nonnegative integer: " +
                        it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "' must be true/false: " + it->second);
  }

  void restrict_keys(const std::set<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
      if (allowed.find(key) == allowed.end()) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Hash of the effective key-value state (overrides included).
  std::uint64_t hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& [k, v] : values_) {
      h = fnv1a64(k, h);
      h = fnv1a64("=", h);
      h = fnv1a64(v, h);
      h = fnv1a64("\n", h);
    }
    return h;
  }

 private:
  std::map<std::string, std::string> values_;
  std::string raw_text_;
};

}  // namespace convasr
