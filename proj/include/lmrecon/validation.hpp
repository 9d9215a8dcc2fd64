#pragma once

/** @file
 * Reconstruction scoring, MCMC convergence diagnostics and the transient
 * climate response transform.
 *
 * Conventions: sample variances divide by n-1; central intervals use type-7
 * quantiles of the draws; interval score and CRPS are negatively oriented
 * (smaller is better). Draw matrices are iteration x year.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/stats.hpp"

namespace lmr::validation {

inline constexpr std::size_t kMinDraws = 40;

struct PointMetrics {
  double sq_bias = 0.0;
  double variance = 0.0;
  double rmse = 0.0;
};

/// Differences d = mean - observed: sq_bias = mean(d)^2, variance = var(d)
/// with n-1, rmse = sqrt(sq_bias + variance).
inline PointMetrics point_metrics(std::span<const double> posterior_mean, std::span<const double> observed) {
  if (posterior_mean.size() != observed.size())
    throw ShapeError("posterior mean has " + std::to_string(posterior_mean.size()) + " years, observations " +
                     std::to_string(observed.size()));
  if (observed.size() < 2) throw InsufficientSampleError("point metrics need at least 2 years");
  std::vector<double> d(observed.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = posterior_mean[i] - observed[i];
  PointMetrics m;
  const double mu = stats::mean(d);
  m.sq_bias = mu * mu;
  m.variance = stats::variance(d);
  m.rmse = std::sqrt(m.sq_bias + m.variance);
  return m;
}

struct Interval {
  double lower;
  double upper;
};

/// Central interval of mass `level` from type-7 quantiles.
inline Interval central_interval(std::vector<double> draws, double level) {
  std::sort(draws.begin(), draws.end());
  const double a = (1.0 - level) / 2.0;
  return {stats::quantile_sorted(draws, a), stats::quantile_sorted(draws, 1.0 - a)};
}

namespace detail {

inline void check_scoring_inputs(const Eigen::MatrixXd& draws, std::span<const double> observed, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ParameterDomainError("interval level must lie in (0,1)");
  if (static_cast<std::size_t>(draws.cols()) != observed.size())
    throw ShapeError("draws have " + std::to_string(draws.cols()) + " years, observations " +
                     std::to_string(observed.size()));
  if (static_cast<std::size_t>(draws.rows()) < kMinDraws)
    throw InsufficientSampleError("interval scoring needs at least " + std::to_string(kMinDraws) + " draws, got " +
                                  std::to_string(draws.rows()));
  if (observed.empty()) throw InsufficientSampleError("no years to score");
}

inline std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

}  // namespace detail

/// Percentage of years whose observation falls inside the central interval.
inline double ecp(const Eigen::MatrixXd& draws, std::span<const double> observed, double level) {
  detail::check_scoring_inputs(draws, observed, level);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < observed.size(); ++j) {
    const auto iv = central_interval(detail::column(draws, static_cast<Eigen::Index>(j)), level);
    if (observed[j] >= iv.lower && observed[j] <= iv.upper) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(observed.size());
}

/// Interval score of a single interval with alpha = 1 - level.
inline double interval_score_one(const Interval& iv, double y, double level) {
  const double alpha = 1.0 - level;
  return (iv.upper - iv.lower) + (2.0 / alpha) * std::max(iv.lower - y, 0.0) +
         (2.0 / alpha) * std::max(y - iv.upper, 0.0);
}

/// Mean interval score over years.
inline double interval_score(const Eigen::MatrixXd& draws, std::span<const double> observed, double level) {
  detail::check_scoring_inputs(draws, observed, level);
  double total = 0.0;
  for (std::size_t j = 0; j < observed.size(); ++j)
    total += interval_score_one(central_interval(detail::column(draws, static_cast<Eigen::Index>(j)), level),
                                observed[j], level);
  return total / static_cast<double>(observed.size());
}

/// Empirical CRPS mean|X - y| - mean|X - X'|/2. With the draws sorted,
/// sum_{i,j} |x_i - x_j| = 2 sum_i (2i - m + 1) x_(i).
inline double crps_sample(std::vector<double> draws, double y) {
  const std::size_t m = draws.size();
  if (m < 2) throw InsufficientSampleError("CRPS needs at least 2 draws");
  std::sort(draws.begin(), draws.end());
  double abs_dev = 0.0, spread = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    abs_dev += std::abs(draws[i] - y);
    spread += (2.0 * static_cast<double>(i) - static_cast<double>(m) + 1.0) * draws[i];
  }
  const double dm = static_cast<double>(m);
  return std::max(abs_dev / dm - spread / (dm * dm), 0.0);
}

/// Closed-form CRPS of N(mu, sigma^2) at y.
inline double crps_gaussian(double mu, double sigma, double y) {
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * stats::normal_cdf(z) - 1.0) + 2.0 * stats::normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

/// Mean empirical CRPS over years.
inline double crps(const Eigen::MatrixXd& draws, std::span<const double> observed) {
  if (static_cast<std::size_t>(draws.cols()) != observed.size())
    throw ShapeError("draws and observations differ in years");
  if (observed.empty()) throw InsufficientSampleError("no years to score");
  double total = 0.0;
  for (std::size_t j = 0; j < observed.size(); ++j)
    total += crps_sample(detail::column(draws, static_cast<Eigen::Index>(j)), observed[j]);
  return total / static_cast<double>(observed.size());
}

struct ValidationReport {
  double sq_bias = 0.0;
  double variance = 0.0;
  double rmse = 0.0;
  double ecp95 = 0.0;
  double ecp80 = 0.0;
  double is95 = 0.0;
  double is80 = 0.0;
  double crps = 0.0;
};

/// Every score at once; the point metrics use the posterior mean per year.
inline ValidationReport validate(const Eigen::MatrixXd& draws, std::span<const double> observed) {
  detail::check_scoring_inputs(draws, observed, 0.95);
  const Eigen::VectorXd mean = draws.colwise().mean().transpose();
  const auto pm = point_metrics(std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size())), observed);
  ValidationReport r;
  r.sq_bias = pm.sq_bias;
  r.variance = pm.variance;
  r.rmse = pm.rmse;
  r.ecp95 = ecp(draws, observed, 0.95);
  r.ecp80 = ecp(draws, observed, 0.80);
  r.is95 = interval_score(draws, observed, 0.95);
  r.is80 = interval_score(draws, observed, 0.80);
  r.crps = crps(draws, observed);
  return r;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics

namespace detail {

inline void check_chains(std::size_t m, std::size_t n) {
  if (m < 2) throw ConfigError("PSRF needs at least 2 chains");
  if (n < 100) throw InsufficientSampleError("PSRF needs chains of length at least 100");
}

}  // namespace detail

/// Gelman-Rubin R = sqrt(((n-1)/n W + B/n (1 + 1/m)) / W), with B/n the
/// variance of the chain means and W the mean within-chain variance.
inline double psrf(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  detail::check_chains(m, m ? chains[0].size() : 0);
  const std::size_t n = chains[0].size();
  std::vector<double> means(m);
  double w = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    if (chains[c].size() != n) throw ShapeError("chains differ in length");
    means[c] = stats::mean(chains[c]);
    w += stats::variance(chains[c]);
  }
  w /= static_cast<double>(m);
  const double b_over_n = stats::variance(means);
  if (!(w > 0.0)) {
    if (b_over_n > 0.0) return std::numeric_limits<double>::infinity();
    return 1.0;
  }
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  const double v = (dn - 1.0) / dn * w + (1.0 + 1.0 / dm) * b_over_n;
  return std::sqrt(v / w);
}

/// Brooks-Gelman multivariate PSRF, sqrt((n-1)/n + (m+1)/m * lambda_max)
/// with lambda_max the largest eigenvalue of W^{-1} B/n. Each chain is an
/// n x p draw matrix.
inline double psrf_multivariate(const std::vector<Eigen::MatrixXd>& chains) {
  const std::size_t m = chains.size();
  detail::check_chains(m, m ? static_cast<std::size_t>(chains[0].rows()) : 0);
  const Eigen::Index n = chains[0].rows(), p = chains[0].cols();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd means(static_cast<Eigen::Index>(m), p);
  for (std::size_t c = 0; c < m; ++c) {
    const auto& x = chains[c];
    if (x.rows() != n || x.cols() != p) throw ShapeError("chains differ in shape");
    const Eigen::RowVectorXd mu = x.colwise().mean();
    means.row(static_cast<Eigen::Index>(c)) = mu;
    const Eigen::MatrixXd centered = x.rowwise() - mu;
    W += centered.transpose() * centered / static_cast<double>(n - 1);
  }
  W /= static_cast<double>(m);
  const Eigen::MatrixXd mc = means.rowwise() - means.colwise().mean();
  const Eigen::MatrixXd B_over_n = mc.transpose() * mc / static_cast<double>(m - 1);

  Eigen::LLT<Eigen::MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) throw NumericalDegeneracyError("within-chain covariance is singular");
  // eigenvalues of W^{-1} B/n equal those of L^{-1} (B/n) L^{-T}
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd Linv_B = L.triangularView<Eigen::Lower>().solve(B_over_n);
  const Eigen::MatrixXd S = L.triangularView<Eigen::Lower>().solve(Linv_B.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
  const double lambda = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return std::sqrt((dn - 1.0) / dn + (dm + 1.0) / dm * lambda);
}

// ---------------------------------------------------------------------------
// Transient climate response

/// beta3 log 2 / sd(log C), elementwise.
inline std::vector<double> tcr_transform(std::span<const double> beta3, std::span<const double> log_c) {
  if (log_c.size() < 2) throw InsufficientSampleError("log C needs at least 2 values");
  const double sd = stats::stddev(log_c);
  if (!(sd > 0.0)) throw DegenerateInputError("log C is constant");
  std::vector<double> out(beta3.size());
  for (std::size_t i = 0; i < beta3.size(); ++i) out[i] = beta3[i] * std::numbers::ln2 / sd;
  return out;
}

struct TcrDensity {
  std::vector<double> draws;
  double median = 0.0;
  double lower95 = 0.0;
  double upper95 = 0.0;
  std::vector<std::pair<std::string, double>> scenario_mix;
};

/// Pooled TCR draws. Each scenario contributes round(weight * total) draws
/// (largest-remainder rounding), resampled uniformly with replacement from
/// its own transformed draws. `total` defaults to the size of the largest
/// scenario draw set.
template <typename G>
TcrDensity tcr_density(const std::map<std::string, std::vector<double>>& beta3_by_scenario,
                       const std::map<std::string, double>& weights, std::span<const double> log_c, G& rng,
                       std::size_t total = 0) {
  double wsum = 0.0;
  for (const auto& [label, w] : weights) {
    if (!(w >= 0.0)) throw ParameterDomainError("weight for scenario " + label + " is negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw ParameterDomainError("scenario weights must sum to 1");

  TcrDensity out;
  std::vector<std::pair<std::string, std::vector<double>>> pools;
  for (const auto& [label, w] : weights) {
    out.scenario_mix.emplace_back(label, w);
    if (w == 0.0) continue;
    const auto it = beta3_by_scenario.find(label);
    if (it == beta3_by_scenario.end() || it->second.empty())
      throw InsufficientSampleError("no draws for scenario " + label);
    pools.emplace_back(label, tcr_transform(it->second, log_c));
  }
  if (total == 0)
    for (const auto& [label, pool] : pools) total = std::max(total, pool.size());
  if (pools.empty() || total == 0) throw InsufficientSampleError("empty TCR draw set");

  // largest-remainder allocation of `total` draws
  std::vector<std::size_t> counts;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    const double exact = weights.at(pools[i].first) * static_cast<double>(total);
    counts.push_back(static_cast<std::size_t>(std::floor(exact)));
    assigned += counts.back();
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];

  for (std::size_t i = 0; i < pools.size(); ++i) {
    const auto& pool = pools[i].second;
    if (weights.at(pools[i].first) == 1.0) {
      // a single full-weight scenario is its own transform, no resampling
      out.draws = pool;
      break;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t k = 0; k < counts[i]; ++k) out.draws.push_back(pool[pick(rng)]);
  }
  std::vector<double> sorted = out.draws;
  std::sort(sorted.begin(), sorted.end());
  out.median = stats::quantile_sorted(sorted, 0.5);
  out.lower95 = stats::quantile_sorted(sorted, 0.025);
  out.upper95 = stats::quantile_sorted(sorted, 0.975);
  return out;
}

}  // namespace lmr::validation
