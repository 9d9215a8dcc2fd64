#pragma once

/** @file
 * Collapse a proxy panel into a single reduced-proxy series.
 *
 * The pipeline is: per-series transform, standardization over a reference
 * window, optional screening by correlation with a local reference series,
 * then an OLS fit of temperature on the standardized proxies over the fit
 * window. The fitted linear combination, evaluated wherever every proxy is
 * present, is the reduced proxy.
 */

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/frame.hpp"

namespace lmr::reduction {

inline constexpr double kMaxConditionNumber = 1e8;

/// Elementwise log or log(1 - x); throws ParameterDomainError naming the year
/// on a nonpositive argument.
inline std::vector<double> apply_transform(const TimeSeriesFrame& frame, const Column& col) {
  std::vector<double> out = col.values;
  if (col.transform == Transform::Identity) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (is_missing(out[i])) continue;
    const double arg = col.transform == Transform::Log ? out[i] : 1.0 - out[i];
    if (!(arg > 0.0))
      throw ParameterDomainError("transform of column '" + col.name + "' undefined in year " +
                                 std::to_string(frame.years()[i]));
    out[i] = std::log(arg);
  }
  return out;
}

/// Center and scale `column` so that its present cells inside `window` have
/// mean 0 and sample variance 1; the same affine map is applied to every
/// year, and missing cells stay missing.
inline std::vector<double> standardize(const TimeSeriesFrame& frame, std::string_view column,
                                       const Window& window) {
  const auto& col = frame.column(column);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < frame.size(); ++i)
    if (window.contains(frame.years()[i]) && !is_missing(col.values[i])) {
      sum += col.values[i];
      ++n;
    }
  if (n < 2)
    throw DegenerateInputError("column '" + std::string(column) + "' has fewer than 2 values in window");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < frame.size(); ++i)
    if (window.contains(frame.years()[i]) && !is_missing(col.values[i]))
      ss += (col.values[i] - mean) * (col.values[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateInputError("column '" + std::string(column) + "' is constant");
  std::vector<double> out(col.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = is_missing(col.values[i]) ? kMissing : (col.values[i] - mean) / sd;
  return out;
}

struct ScreeningRow {
  std::string proxy;
  std::string reference;
  std::size_t overlap = 0;
  double correlation = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool retained = false;
};

struct ScreeningReport {
  std::set<std::string> retained;
  std::vector<ScreeningRow> rows;
};

/// Two-sided test of zero Pearson correlation, r sqrt(n-2) / sqrt(1-r^2) ~ t(n-2).
inline double correlation_p_value(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

/// Retain proxies whose correlation with their local reference is significant
/// at `level` over the years both are present.
inline ScreeningReport screen_proxies(const TimeSeriesFrame& frame,
                                      const std::vector<std::string>& proxies,
                                      const std::map<std::string, std::string>& local_reference,
                                      double level = 0.05) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("screening level must lie in (0,1)");
  ScreeningReport report;
  for (const auto& p : proxies) {
    const auto it = local_reference.find(p);
    if (it == local_reference.end()) throw ConfigError("proxy '" + p + "' has no local reference series");
    const auto& x = frame.column(p).values;
    const auto& y = frame.column(it->second).values;
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!is_missing(x[i]) && !is_missing(y[i])) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    if (xs.size() < 10)
      throw DataError("proxy '" + p + "' overlaps its reference in fewer than 10 years");
    const auto n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      syy += (ys[i] - my) * (ys[i] - my);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
      throw DegenerateInputError("proxy '" + p + "' or its reference is constant over the overlap");
    ScreeningRow row;
    row.proxy = p;
    row.reference = it->second;
    row.overlap = xs.size();
    row.correlation = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = n - 2.0;
    row.t_statistic = std::abs(row.correlation) >= 1.0
                          ? std::copysign(std::numeric_limits<double>::infinity(), row.correlation)
                          : row.correlation * std::sqrt(df / (1.0 - row.correlation * row.correlation));
    row.p_value = correlation_p_value(row.correlation, xs.size());
    row.retained = row.p_value < level;
    if (row.retained) report.retained.insert(p);
    report.rows.push_back(std::move(row));
  }
  return report;
}

struct ReducedProxy {
  std::vector<std::pair<std::string, double>> weights;  // proxy name, a_i
  double intercept = 0.0;
  std::vector<int> years;
  std::vector<double> series;  // missing where any proxy is missing
  double r_squared = 0.0;
  Window fit_window;
  std::size_t fit_rows = 0;
};

/// OLS of temperature on the given proxy columns over `fit_window`, using the
/// rows where temperature and every proxy are present.
inline ReducedProxy fit_reduced_proxy(const TimeSeriesFrame& frame, std::string_view temperature,
                                      const std::vector<std::string>& proxies,
                                      const Window& fit_window) {
  if (proxies.empty()) throw ConfigError("no proxies to fit");
  const auto& t = frame.column(temperature).values;
  std::vector<const std::vector<double>*> cols;
  for (const auto& p : proxies) cols.push_back(&frame.column(p).values);

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!fit_window.contains(frame.years()[i]) || is_missing(t[i])) continue;
    if (std::any_of(cols.begin(), cols.end(), [&](const auto* c) { return is_missing((*c)[i]); }))
      continue;
    rows.push_back(i);
  }
  const std::size_t p = proxies.size();
  if (rows.size() < p + 2)
    throw DataError("fit window has " + std::to_string(rows.size()) + " complete rows; need at least " +
                    std::to_string(p + 2));

  for (std::size_t c = 0; c < p; ++c) {
    const double first = (*cols[c])[rows.front()];
    if (std::all_of(rows.begin(), rows.end(), [&](std::size_t i) { return (*cols[c])[i] == first; }))
      throw DegenerateInputError("proxy '" + proxies[c] + "' is constant over the fit window");
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p + 1));
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t i = rows[static_cast<std::size_t>(r)];
    X(r, 0) = 1.0;
    for (std::size_t c = 0; c < p; ++c) X(r, static_cast<Eigen::Index>(c + 1)) = (*cols[c])[i];
    y(r) = t[i];
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();
  if (!(cond <= kMaxConditionNumber)) {
    // name the columns carrying the near-null direction
    const Eigen::VectorXd v = svd.matrixV().col(sv.size() - 1);
    std::string names;
    for (Eigen::Index c = 0; c < v.size(); ++c)
      if (std::abs(v(c)) > 0.1) {
        if (!names.empty()) names += ", ";
        names += c == 0 ? std::string("(intercept)") : proxies[static_cast<std::size_t>(c - 1)];
      }
    throw CollinearityError("design is rank deficient or ill-conditioned (condition number " +
                            std::to_string(cond) + "); offending columns: " + names);
  }
  const Eigen::VectorXd coef = svd.solve(y);

  ReducedProxy out;
  out.intercept = coef(0);
  for (std::size_t c = 0; c < p; ++c) out.weights.emplace_back(proxies[c], coef(static_cast<Eigen::Index>(c + 1)));
  const Eigen::VectorXd resid = y - X * coef;
  const double ybar = y.mean();
  const double sst = (y.array() - ybar).square().sum();
  out.r_squared = sst > 0.0 ? std::clamp(1.0 - resid.squaredNorm() / sst, 0.0, 1.0) : 1.0;
  out.fit_window = fit_window;
  out.fit_rows = rows.size();
  out.years = frame.years();
  out.series.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    double v = out.intercept;
    for (std::size_t c = 0; c < p; ++c) {
      const double x = (*cols[c])[i];
      if (is_missing(x)) {
        v = kMissing;
        break;
      }
      v += coef(static_cast<Eigen::Index>(c + 1)) * x;
    }
    out.series[i] = v;
  }
  return out;
}

}  // namespace lmr::reduction
