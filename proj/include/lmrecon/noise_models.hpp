#pragma once

/** @file
 * Stationary zero-mean Gaussian error processes: white noise, AR(1) and
 * fractional Gaussian noise (fGn).
 *
 * Every process is parameterized by its marginal standard deviation, so the
 * unit-scale version of each model has variance exactly one at lag zero.
 * Likelihoods use the Durbin-Levinson one-step prediction recursion, which is
 * O(n^2) for an n-point Toeplitz covariance; Toeplitz inverses are assembled
 * with the Trench recursion from the final-order predictor.
 */

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/fft.hpp"

namespace lmr {

enum class NoiseKind { White, AR1, FGN };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "white";
    case NoiseKind::AR1: return "ar1";
    case NoiseKind::FGN: return "fgn";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "white" || s == "White") return NoiseKind::White;
  if (s == "ar1" || s == "AR1") return NoiseKind::AR1;
  if (s == "fgn" || s == "FGN" || s == "fGn") return NoiseKind::FGN;
  throw ConfigError("unknown noise kind '" + std::string(s) + "'");
}

/// Open interval in which the memory parameter of `kind` lives. White noise
/// has no free parameter; its conventional value is H = 1/2.
struct ParamRange {
  double lo;
  double hi;
};

inline ParamRange memory_param_range(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::AR1: return {-1.0, 1.0};
    case NoiseKind::FGN: return {0.0, 1.0};
    case NoiseKind::White: return {0.5, 0.5};
  }
  return {0.0, 1.0};
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::White;
  double param = 0.5;  // phi for AR1, H for fGn, unused for white noise
  double scale = 1.0;  // marginal standard deviation

  static NoiseModel white(double scale = 1.0) { return {NoiseKind::White, 0.5, scale}; }
  static NoiseModel ar1(double phi, double scale = 1.0) { return {NoiseKind::AR1, phi, scale}; }
  static NoiseModel fgn(double hurst, double scale = 1.0) { return {NoiseKind::FGN, hurst, scale}; }

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw ParameterDomainError("noise scale must be positive, got " + std::to_string(scale));
    if (kind == NoiseKind::AR1 && !(std::abs(param) < 1.0))
      throw ParameterDomainError("AR(1) coefficient must satisfy |phi| < 1, got " +
                                 std::to_string(param));
    if (kind == NoiseKind::FGN && !(param > 0.0 && param < 1.0))
      throw ParameterDomainError("Hurst parameter must lie in (0,1), got " +
                                 std::to_string(param));
  }
};

struct AcvfSequence {
  std::vector<double> values;  // lags 0..n-1, units of variance

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
};

/// Unit-variance fGn autocovariance at lag k.
inline double fgn_unit_acvf(double hurst, std::size_t lag) {
  const double k = static_cast<double>(lag);
  const double h2 = 2.0 * hurst;
  return 0.5 * (std::pow(k + 1.0, h2) - 2.0 * std::pow(k, h2) + std::pow(std::abs(k - 1.0), h2));
}

inline AcvfSequence acvf(const NoiseModel& model, std::size_t max_lag) {
  model.validate();
  const double var = model.scale * model.scale;
  AcvfSequence out;
  out.values.resize(max_lag + 1, 0.0);
  switch (model.kind) {
    case NoiseKind::White:
      out.values[0] = var;
      break;
    case NoiseKind::AR1: {
      double p = 1.0;
      for (std::size_t k = 0; k <= max_lag; ++k, p *= model.param) out.values[k] = var * p;
      break;
    }
    case NoiseKind::FGN:
      for (std::size_t k = 0; k <= max_lag; ++k)
        out.values[k] = var * fgn_unit_acvf(model.param, k);
      // the closed form is exact at lag zero; pin it against rounding
      out.values[0] = var;
      break;
  }
  return out;
}

/// Toeplitz covariance of n consecutive observations. Applies a one-time
/// diagonal jitter of 1e-10 * gamma(0) if the Cholesky factorization fails,
/// and throws NumericalDegeneracyError if it fails again.
inline Eigen::MatrixXd covariance_matrix(const NoiseModel& model, std::size_t n) {
  if (n == 0) throw ParameterDomainError("covariance_matrix needs n >= 1");
  const auto g = acvf(model, n - 1);
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd s(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) s(i, j) = g.values[static_cast<std::size_t>(std::abs(i - j))];
  if (Eigen::LLT<Eigen::MatrixXd>(s).info() == Eigen::Success) return s;
  s.diagonal().array() += 1e-10 * g.values[0];
  if (Eigen::LLT<Eigen::MatrixXd>(s).info() == Eigen::Success) return s;
  throw NumericalDegeneracyError("covariance matrix is not positive definite after jitter");
}

namespace detail {

// Runs the Durbin-Levinson recursion on gamma[0..n-1]. `step(t, phi, v)` is
// called for t = 0..n-1 with the order-t predictor coefficients phi[0..t-1]
// (phi[j-1] multiplies x_{t-j}) and the innovation variance v_t. Returns false
// if a partial correlation leaves (-1, 1).
template <typename Step>
bool levinson_scan(std::span<const double> gamma, std::size_t n, Step&& step) {
  std::vector<double> phi;
  std::vector<double> next;
  phi.reserve(n);
  next.reserve(n);
  double v = gamma[0];
  if (!(v > 0.0) || !std::isfinite(v)) return false;
  step(std::size_t{0}, std::span<const double>(phi), v);
  for (std::size_t t = 1; t < n; ++t) {
    double acc = gamma[t];
    for (std::size_t j = 1; j < t; ++j) acc -= phi[j - 1] * gamma[t - j];
    const double kappa = acc / v;
    if (!(std::abs(kappa) < 1.0)) return false;
    next.assign(t, 0.0);
    for (std::size_t j = 1; j < t; ++j) next[j - 1] = phi[j - 1] - kappa * phi[t - j - 1];
    next[t - 1] = kappa;
    phi.swap(next);
    v *= (1.0 - kappa * kappa);
    if (!(v > 0.0)) return false;
    step(t, std::span<const double>(phi), v);
  }
  return true;
}

inline std::vector<double> jittered(std::span<const double> gamma) {
  std::vector<double> g(gamma.begin(), gamma.end());
  g[0] += 1e-10 * gamma[0];
  return g;
}

}  // namespace detail

/// Exact Gaussian log-density of x under a zero-mean stationary law with the
/// given autocovariance, via one-step prediction errors.
inline double loglik_durbin_levinson(std::span<const double> x, const AcvfSequence& g) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  if (g.size() < n) throw ShapeError("autocovariance shorter than the series");

  auto attempt = [&](std::span<const double> gamma, double& out) {
    double ll = 0.0;
    const bool ok = detail::levinson_scan(gamma, n, [&](std::size_t t, std::span<const double> phi,
                                                        double v) {
      double pred = 0.0;
      for (std::size_t j = 1; j <= t; ++j) pred += phi[j - 1] * x[t - j];
      const double e = x[t] - pred;
      ll += -0.5 * (std::log(2.0 * std::numbers::pi * v) + e * e / v);
    });
    out = ll;
    return ok;
  };

  double ll = 0.0;
  if (attempt(g.values, ll)) return ll;
  const auto gj = detail::jittered(g.values);
  if (attempt(gj, ll)) return ll;
  throw NumericalDegeneracyError("autocovariance is not positive definite (Levinson failure)");
}

struct ToeplitzInverse {
  Eigen::MatrixXd inverse;
  double log_det = 0.0;
};

/// Inverse and log-determinant of the n x n Toeplitz matrix built from gamma,
/// in O(n^2) via the Trench recursion.
inline ToeplitzInverse toeplitz_inverse(const AcvfSequence& g, std::size_t n) {
  if (n == 0) return {};
  if (g.size() < n) throw ShapeError("autocovariance shorter than requested dimension");

  auto attempt = [&](std::span<const double> gamma, ToeplitzInverse& out) {
    std::vector<double> last_phi;
    double last_v = 0.0, log_det = 0.0;
    const bool ok =
        detail::levinson_scan(gamma, n, [&](std::size_t t, std::span<const double> phi, double v) {
          log_det += std::log(v);
          if (t + 1 == n) {
            last_phi.assign(phi.begin(), phi.end());
            last_v = v;
          }
        });
    if (!ok) return false;
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::VectorXd c(N);
    c(0) = 1.0 / last_v;
    for (Eigen::Index k = 1; k < N; ++k) c(k) = -last_phi[static_cast<std::size_t>(k - 1)] / last_v;
    Eigen::MatrixXd b(N, N);
    b.col(0) = c;
    b.row(0) = c.transpose();
    for (Eigen::Index i = 0; i + 1 < N; ++i)
      for (Eigen::Index j = i; j + 1 < N; ++j) {
        const double val = b(i, j) + (c(i + 1) * c(j + 1) - c(N - 1 - i) * c(N - 1 - j)) / c(0);
        b(i + 1, j + 1) = val;
        b(j + 1, i + 1) = val;
      }
    out.inverse = std::move(b);
    out.log_det = log_det;
    return true;
  };

  ToeplitzInverse out;
  if (attempt(g.values, out)) return out;
  const auto gj = detail::jittered(g.values);
  if (attempt(gj, out)) return out;
  throw NumericalDegeneracyError("Toeplitz matrix is not positive definite (Levinson failure)");
}

/// Exact draw of n points of unit-variance fGn by circulant embedding.
template <typename Rng>
std::vector<double> sample_fgn(double hurst, std::size_t n, Rng& rng) {
  NoiseModel::fgn(hurst).validate();
  if (n == 0) throw ParameterDomainError("sample_fgn needs n >= 1");
  if (n == 1) {
    std::normal_distribution<double> z;
    return {z(rng)};
  }
  // circulant row of length 2m, m = n - 1 is enough; use m = n for symmetry
  const std::size_t m = n;
  const std::size_t len = 2 * m;
  std::vector<std::complex<double>> row(len);
  for (std::size_t k = 0; k <= m; ++k) row[k] = fgn_unit_acvf(hurst, k);
  for (std::size_t k = m + 1; k < len; ++k) row[k] = row[len - k];
  row[0] = 1.0;
  const auto eig = fft::forward(row);

  std::vector<double> lambda(len);
  double lmax = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    lambda[k] = eig[k].real();
    lmax = std::max(lmax, std::abs(lambda[k]));
  }
  for (double& l : lambda) {
    if (l < -1e-8 * lmax) throw EmbeddingError("circulant embedding has a negative eigenvalue");
    if (l < 0.0) l = 0.0;
  }

  std::normal_distribution<double> z;
  const double dl = static_cast<double>(len);
  std::vector<std::complex<double>> w(len);
  w[0] = std::sqrt(lambda[0] / dl) * z(rng);
  w[m] = std::sqrt(lambda[m] / dl) * z(rng);
  for (std::size_t k = 1; k < m; ++k) {
    const double a = z(rng);
    const double b = z(rng);
    const double s = std::sqrt(lambda[k] / (2.0 * dl));
    w[k] = std::complex<double>(s * a, s * b);
    w[len - k] = std::conj(w[k]);
  }
  const auto y = fft::forward(w);
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = y[t].real();
  return out;
}

inline std::vector<double> sample_fgn(double hurst, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_fgn(hurst, n, rng);
}

/// Draw n consecutive values of the given process at its own scale.
template <typename Rng>
std::vector<double> sample_noise(const NoiseModel& model, std::size_t n, Rng& rng) {
  model.validate();
  std::vector<double> out;
  std::normal_distribution<double> z;
  switch (model.kind) {
    case NoiseKind::White:
      out.resize(n);
      for (double& v : out) v = z(rng);
      break;
    case NoiseKind::AR1: {
      out.resize(n);
      const double innov = std::sqrt(1.0 - model.param * model.param);
      for (std::size_t t = 0; t < n; ++t)
        out[t] = t == 0 ? z(rng) : model.param * out[t - 1] + innov * z(rng);
      break;
    }
    case NoiseKind::FGN:
      out = sample_fgn(model.param, n, rng);
      break;
  }
  for (double& v : out) v *= model.scale;
  return out;
}

}  // namespace lmr
