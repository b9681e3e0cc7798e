#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cgc/common.hpp"

namespace cgc {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Flat `section.key = value` text config. Every getter records the value it
// resolved (given or default) so the manifest lists the complete run setup.
// Keys that were given but never read are rejected by check_all_used().
class RunConfig {
 public:
  static RunConfig parse(std::istream& is, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
      const std::string key = trim(body.substr(0, eq));
      const std::string value = trim(body.substr(eq + 1));
      if (key.empty() || key.find('.') == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(number) + ": key '" + key +
                          "' needs a section prefix");
      if (!cfg.given_.emplace(key, value).second)
        throw ConfigError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in, path);
  }

  // Command-line overrides take precedence over file values.
  void set(const std::string& key, const std::string& value) { given_[key] = value; }

  bool has(const std::string& key) const { return given_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    auto it = given_.find(key);
    const std::string v = it == given_.end() ? fallback : it->second;
    resolved_[key] = v;
    return v;
  }

  double get_double(const std::string& key, double fallback) {
    auto it = given_.find(key);
    double v = fallback;
    if (it != given_.end()) v = parse_number(key, it->second);
    resolved_[key] = format_double(v);
    return v;
  }

  int get_int(const std::string& key, int fallback) {
    auto it = given_.find(key);
    long long v = fallback;
    if (it != given_.end()) v = parse_integer(key, it->second);
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key + ": integer out of range");
    resolved_[key] = std::to_string(v);
    return static_cast<int>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = given_.find(key);
    std::uint64_t v = fallback;
    if (it != given_.end()) {
      try {
        std::size_t used = 0;
        if (!it->second.empty() && it->second[0] == '-') throw ConfigError("");
        v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw ConfigError("");
      } catch (...) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + it->second + "'");
      }
    }
    resolved_[key] = std::to_string(v);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) {
    auto it = given_.find(key);
    bool v = fallback;
    if (it != given_.end()) {
      if (it->second == "true" || it->second == "1") {
        v = true;
      } else if (it->second == "false" || it->second == "0") {
        v = false;
      } else {
        throw ConfigError(key + ": expected true or false, got '" + it->second + "'");
      }
    }
    resolved_[key] = v ? "true" : "false";
    return v;
  }

  // Comma-separated list.
  std::vector<std::string> get_list(const std::string& key, const std::string& fallback) {
    std::vector<std::string> out;
    std::stringstream ss(get_string(key, fallback));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key, const std::string& fallback) {
    std::vector<double> out;
    std::string normalised;
    for (const auto& item : get_list(key, fallback)) {
      out.push_back(parse_number(key, item));
      normalised += (normalised.empty() ? "" : ",") + format_double(out.back());
    }
    resolved_[key] = normalised;
    return out;
  }

  // Records a derived value that belongs in the manifest.
  void record(const std::string& key, const std::string& value) { resolved_[key] = value; }

  void check_all_used() const {
    for (const auto& [key, value] : given_)
      if (!resolved_.count(key)) throw ConfigError("unknown or unused config key '" + key + "'");
  }

  const std::map<std::string, std::string>& resolved() const { return resolved_; }

  void write_manifest(std::ostream& os) const {
    os << "# resolved run configuration; re-run with --config <this file>\n";
    auto all = resolved_;
    all["artifact.version"] = kArtifactVersion;
    for (const auto& [key, value] : all) os << key << " = " << value << "\n";
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double parse_number(const std::string& key, const std::string& text) {
    try {
      return parse_double(text);
    } catch (const ConfigError&) {
      throw ConfigError(key + ": expected a number, got '" + text + "'");
    }
  }

  static long long parse_integer(const std::string& key, const std::string& text) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw ConfigError("");
      return v;
    } catch (...) {
      throw ConfigError(key + ": expected an integer, got '" + text + "'");
    }
  }

  std::map<std::string, std::string> given_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace cgc
