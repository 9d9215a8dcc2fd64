#pragma once

// Flat sectioned key = value configuration. '#' and ';' start comments.
// Every key must be declared in the schema; anything else is an error.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lmrecon/errors.hpp"

namespace lmr::config {

/// Allowed keys per section.
using Schema = std::map<std::string, std::set<std::string>>;

class Config {
 public:
  static Config parse(const std::string& text, const Schema& schema, const std::string& source = "config") {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto where = source + ":" + std::to_string(lineno);
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (!schema.contains(section)) throw ConfigError(where + ": unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      if (section.empty()) throw ConfigError(where + ": key outside any section");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (!schema.at(section).contains(key))
        throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
      const auto full = section + "." + key;
      if (c.values_.contains(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      c.values_[full] = value;
    }
    return c;
  }

  static Config load(const std::filesystem::path& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Config c = parse(ss.str(), schema, path.string());
    c.base_ = path.parent_path();
    return c;
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  /// Relative paths resolve against the config file's directory.
  std::optional<std::filesystem::path> get_path(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::filesystem::path p(*v);
    return p.is_absolute() ? p : base_ / p;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? to_double(key, *v) : fallback;
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    long long out = 0;
    const auto r = std::from_chars(v->data(), v->data() + v->size(), out);
    if (r.ec != std::errc{} || r.ptr != v->data() + v->size())
      throw ConfigError("'" + key + "' must be an integer, got '" + *v + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1") return true;
    if (*v == "false" || *v == "no" || *v == "0") return false;
    throw ConfigError("'" + key + "' must be true or false, got '" + *v + "'");
  }

  /// Comma- or space-separated list of reals.
  std::optional<std::vector<double>> get_doubles(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    std::string cell;
    std::string s = *v;
    for (char& ch : s)
      if (ch == ',') ch = ' ';
    std::istringstream in(s);
    while (in >> cell) out.push_back(to_double(key, cell));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("'" + key + "' must be a number, got '" + v + "'");
  }

  std::map<std::string, std::string> values_;
  std::filesystem::path base_;
};

/// Keys accepted by `reconstruct`.
inline const Schema& reconstruct_schema() {
  static const Schema s{
      {"data",
       {"proxy", "proxy_column", "temperature", "temperature_column", "forcings", "solar_column", "volcanic_column",
        "ghg_column"}},
      {"windows", {"calibration", "prediction"}},
      {"priors", {"alpha_mean", "alpha_variance", "beta_mean", "beta_variance", "sigma_shape", "sigma_rate"}},
      {"chain", {"iterations", "burn_in", "chains", "seed", "step_H", "step_K", "adapt_burn_in"}},
      {"model", {"scenario"}},
  };
  return s;
}

}  // namespace lmr::config
