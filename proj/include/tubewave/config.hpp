#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tubewave/csv.hpp"

namespace tubewave {

/// Invalid or unknown configuration entry; `key` names the field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key(key) {}
  std::string key;
};

/// Flat key = value configuration with dotted namespaces. Every lookup records
/// the resolved value so the manifest echoes defaults as well as inputs.
class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "config") {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto s = trim(line);
      if (s.empty()) continue;
      const auto eq = s.find('=');
      const std::string where = source + ":" + std::to_string(lineno);
      if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
      const auto key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
      if (key.empty()) throw ConfigError(where, "empty key");
      if (c.raw_.count(key)) throw ConfigError(key, "given twice (" + where + ")");
      c.raw_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("--config", "cannot read " + path);
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) { raw_[key] = value; }
  bool has(const std::string& key) const { return raw_.count(key) > 0; }

  double num(const std::string& key, double def) const {
    double v = def;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError(key, "expected a number, got '" + s + "'");
    }
    resolved_[key] = format_double(v);
    return v;
  }

  long integer(const std::string& key, long def) const {
    long v = def;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError(key, "expected an integer, got '" + s + "'");
    }
    resolved_[key] = std::to_string(v);
    return v;
  }

  bool flag(const std::string& key, bool def) const {
    bool v = def;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      if (s == "true" || s == "1" || s == "yes" || s == "on") v = true;
      else if (s == "false" || s == "0" || s == "no" || s == "off") v = false;
      else throw ConfigError(key, "expected true or false, got '" + s + "'");
    }
    resolved_[key] = v ? "true" : "false";
    return v;
  }

  std::string choice(const std::string& key, const std::string& def,
                     const std::vector<std::string>& allowed) const {
    std::string v = def;
    if (auto it = raw_.find(key); it != raw_.end()) v = it->second;
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(key, "'" + v + "' is not one of " + list);
    }
    resolved_[key] = v;
    return v;
  }

  /// Requires a strictly positive number.
  double positive(const std::string& key, double def) const {
    const double v = num(key, def);
    if (!(v > 0.0)) throw ConfigError(key, "must be positive");
    return v;
  }

  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [k, v] : raw_)
      if (!known.count(k)) throw ConfigError(k, "unknown key");
  }

  std::string manifest() const {
    std::ostringstream os;
    for (const auto& [k, v] : resolved_) os << k << " = " << v << '\n';
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> raw_;
  mutable std::map<std::string, std::string> resolved_;
};

}  // namespace tubewave
