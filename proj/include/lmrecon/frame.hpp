#pragma once

// Aligned annual series on an integer year axis, with CSV input/output.
// Missing cells are NaN in memory and empty in CSV.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lmrecon/errors.hpp"

namespace lmr {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

enum class Role { Proxy, Temperature, Forcing };

enum class Transform { Identity, Log, LogOneMinus };

inline Transform parse_transform(std::string_view s) {
  if (s == "identity" || s.empty()) return Transform::Identity;
  if (s == "log") return Transform::Log;
  if (s == "log1m") return Transform::LogOneMinus;
  throw ConfigError("unknown transform '" + std::string(s) + "' (identity|log|log1m)");
}

/// Inclusive year range.
struct Window {
  int first = 0;
  int last = 0;

  bool contains(int year) const { return year >= first && year <= last; }
  int length() const { return last - first + 1; }
};

inline Window parse_window(std::string_view s) {
  // "1900-1982" or "1900:1982"; a leading '-' belongs to the first year
  const std::size_t from = s.empty() ? 0 : 1;
  std::size_t sep = s.find_first_of("-:", from);
  if (sep == std::string_view::npos) throw ConfigError("window '" + std::string(s) + "' is not FIRST-LAST");
  Window w{};
  const auto a = s.substr(0, sep), b = s.substr(sep + 1);
  if (std::from_chars(a.data(), a.data() + a.size(), w.first).ec != std::errc{} ||
      std::from_chars(b.data(), b.data() + b.size(), w.last).ec != std::errc{} || w.last < w.first)
    throw ConfigError("window '" + std::string(s) + "' is not FIRST-LAST");
  return w;
}

inline std::string to_string(const Window& w) {
  return std::to_string(w.first) + "-" + std::to_string(w.last);
}

struct Column {
  std::string name;
  Role role = Role::Proxy;
  Transform transform = Transform::Identity;
  std::vector<double> values;
};

class TimeSeriesFrame {
 public:
  TimeSeriesFrame() = default;

  explicit TimeSeriesFrame(std::vector<int> years) : years_(std::move(years)) {
    for (std::size_t i = 1; i < years_.size(); ++i)
      if (years_[i] <= years_[i - 1]) throw DataError("years must be strictly increasing");
  }

  const std::vector<int>& years() const { return years_; }
  std::size_t size() const { return years_.size(); }
  const std::vector<Column>& columns() const { return columns_; }

  void add_column(Column c) {
    if (c.values.size() != years_.size())
      throw ShapeError("column '" + c.name + "' has " + std::to_string(c.values.size()) +
                       " values for " + std::to_string(years_.size()) + " years");
    if (has(c.name)) throw DataError("duplicate column '" + c.name + "'");
    columns_.push_back(std::move(c));
  }

  bool has(std::string_view name) const {
    return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.name == name; });
  }

  const Column& column(std::string_view name) const {
    for (const auto& c : columns_)
      if (c.name == name) return c;
    throw DataError("no column named '" + std::string(name) + "'");
  }

  Column& column(std::string_view name) {
    for (auto& c : columns_)
      if (c.name == name) return c;
    throw DataError("no column named '" + std::string(name) + "'");
  }

  std::vector<std::string> names(std::optional<Role> role = std::nullopt) const {
    std::vector<std::string> out;
    for (const auto& c : columns_)
      if (!role || c.role == *role) out.push_back(c.name);
    return out;
  }

  std::optional<std::size_t> index_of(int year) const {
    const auto it = std::lower_bound(years_.begin(), years_.end(), year);
    if (it == years_.end() || *it != year) return std::nullopt;
    return static_cast<std::size_t>(it - years_.begin());
  }

  /// Checks that every column has at least one present value.
  void validate() const {
    for (const auto& c : columns_)
      if (std::all_of(c.values.begin(), c.values.end(), is_missing))
        throw DataError("column '" + c.name + "' has no values");
  }

  /// Outer join on years; columns from `other` are appended.
  TimeSeriesFrame merged(const TimeSeriesFrame& other) const {
    std::vector<int> ys = years_;
    ys.insert(ys.end(), other.years_.begin(), other.years_.end());
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    TimeSeriesFrame out(ys);
    auto copy_from = [&](const TimeSeriesFrame& src) {
      for (const auto& c : src.columns_) {
        Column nc{c.name, c.role, c.transform, std::vector<double>(ys.size(), kMissing)};
        for (std::size_t i = 0; i < src.years_.size(); ++i)
          nc.values[*out.index_of(src.years_[i])] = c.values[i];
        out.add_column(std::move(nc));
      }
    };
    copy_from(*this);
    copy_from(other);
    return out;
  }

  /// Sub-frame restricted to the years in `w`.
  TimeSeriesFrame slice(const Window& w) const {
    std::vector<int> ys;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < years_.size(); ++i)
      if (w.contains(years_[i])) {
        ys.push_back(years_[i]);
        idx.push_back(i);
      }
    TimeSeriesFrame out(ys);
    for (const auto& c : columns_) {
      Column nc{c.name, c.role, c.transform, {}};
      for (std::size_t i : idx) nc.values.push_back(c.values[i]);
      out.add_column(std::move(nc));
    }
    return out;
  }

 private:
  std::vector<int> years_;
  std::vector<Column> columns_;
};

// ---------------------------------------------------------------------------
// CSV

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& cell, const std::string& where) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") return kMissing;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse '" + cell + "' as a number (" + where + ")");
  }
}

/// Reads `year,<name>...`; every column gets the given role.
inline TimeSeriesFrame read_frame(const std::filesystem::path& path, Role role) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  const auto header = split_line(line);
  if (header.empty() || header[0] != "year")
    throw DataError(path.string() + ": first column must be 'year'");
  std::vector<int> years;
  std::vector<std::vector<double>> cols(header.size() - 1);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() > header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": too many cells");
    cells.resize(header.size());
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const double y = parse_cell(cells[0], where);
    if (is_missing(y) || y != std::floor(y)) throw DataError(where + ": bad year '" + cells[0] + "'");
    years.push_back(static_cast<int>(y));
    for (std::size_t c = 1; c < header.size(); ++c) cols[c - 1].push_back(parse_cell(cells[c], where));
  }
  TimeSeriesFrame f(years);
  for (std::size_t c = 1; c < header.size(); ++c)
    f.add_column(Column{header[c], role, Transform::Identity, std::move(cols[c - 1])});
  return f;
}

inline std::string format_number(double v) {
  if (is_missing(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Writes `contents` to `path` via a temporary file and rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string frame_to_csv(const TimeSeriesFrame& f, const std::vector<std::string>& names) {
  std::string s = "year";
  for (const auto& n : names) s += "," + n;
  s += "\n";
  for (std::size_t i = 0; i < f.size(); ++i) {
    s += std::to_string(f.years()[i]);
    for (const auto& n : names) s += "," + format_number(f.column(n).values[i]);
    s += "\n";
  }
  return s;
}

inline void write_frame(const std::filesystem::path& path, const TimeSeriesFrame& f,
                        std::optional<std::vector<std::string>> names = std::nullopt) {
  write_atomic(path, frame_to_csv(f, names.value_or(f.names())));
}

/// A matrix of draws keyed by `iteration`; columns are parameter names or years.
struct DrawTable {
  std::vector<std::string> columns;
  std::vector<long> iterations;
  std::vector<std::vector<double>> rows;

  std::vector<double> column_values(std::size_t c) const {
    std::vector<double> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][c];
    return out;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return c;
    throw DataError("draw table has no column '" + std::string(name) + "'");
  }
};

inline std::string draws_to_csv(const DrawTable& t) {
  std::string s = "iteration";
  for (const auto& c : t.columns) s += "," + c;
  s += "\n";
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s += std::to_string(t.iterations[r]);
    for (double v : t.rows[r]) s += "," + format_number(v);
    s += "\n";
  }
  return s;
}

inline DrawTable read_draws(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  auto header = split_line(line);
  if (header.empty() || header[0] != "iteration")
    throw DataError(path.string() + ": first column must be 'iteration'");
  DrawTable t;
  t.columns.assign(header.begin() + 1, header.end());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": wrong number of cells");
    const std::string where = path.string() + ":" + std::to_string(lineno);
    t.iterations.push_back(static_cast<long>(parse_cell(cells[0], where)));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(parse_cell(cells[c], where));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace csv
}  // namespace lmr
