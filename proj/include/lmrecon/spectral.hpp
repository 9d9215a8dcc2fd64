#pragma once

/** @file
 * Periodogram and adaptive multitaper spectral estimates, plus the log-log
 * regression used to read a memory parameter off a spectrum.
 *
 * Normalization: for a mean-removed series of length n the periodogram is
 * I(j/n) = |sum_t x_t exp(-2 pi i j t / n)|^2 / n, reported at the positive
 * Fourier frequencies j = 1..floor(n/2). Summed over j = 1..n-1 these
 * ordinates equal sum_t (x_t - mean)^2, so the reported half sums to roughly
 * (n-1) s^2 / 2 where s^2 is the sample variance. Multitaper eigenspectra use
 * orthonormal tapers and are on the same scale.
 */

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/fft.hpp"

namespace lmr::spectral {

enum class Method { Periodogram, Multitaper };

inline std::string_view to_string(Method m) {
  return m == Method::Periodogram ? "periodogram" : "multitaper";
}

struct SpectrumEstimate {
  std::vector<double> frequencies;  // cycles per sample, strictly increasing
  std::vector<double> power;
  Method method = Method::Periodogram;
  int taper_count = 0;
};

namespace detail {

inline std::vector<double> demeaned(std::span<const double> x) {
  if (x.size() < 8) throw DegenerateInputError("spectral estimation needs at least 8 values");
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  double ss = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    out[t] = x[t] - m;
    ss += out[t] * out[t];
  }
  if (!(ss > 0.0) || !std::isfinite(ss)) throw DegenerateInputError("series is constant");
  return out;
}

inline std::vector<double> fourier_frequencies(std::size_t n) {
  std::vector<double> f(n / 2);
  for (std::size_t j = 1; j <= n / 2; ++j) f[j - 1] = static_cast<double>(j) / static_cast<double>(n);
  return f;
}

// |DFT|^2 at j = 1..floor(n/2), without normalization.
inline std::vector<double> positive_power(std::span<const double> y) {
  const auto X = fft::forward_real(y);
  std::vector<double> p(y.size() / 2);
  for (std::size_t j = 1; j <= y.size() / 2; ++j) p[j - 1] = std::norm(X[j]);
  return p;
}

inline void require_positive(const std::vector<double>& p) {
  for (double v : p)
    if (!(v > 0.0) || !std::isfinite(v))
      throw DegenerateInputError("spectrum has a zero or non-finite ordinate");
}

}  // namespace detail

inline SpectrumEstimate periodogram(std::span<const double> x) {
  const auto y = detail::demeaned(x);
  auto p = detail::positive_power(y);
  const double n = static_cast<double>(y.size());
  for (double& v : p) v /= n;
  detail::require_positive(p);
  return {detail::fourier_frequencies(y.size()), std::move(p), Method::Periodogram, 0};
}

/// Orthonormal sine tapers v_k(t) = sqrt(2/(n+1)) sin(pi k (t+1) / (n+1)),
/// k = 1..count, t = 0..n-1.
inline std::vector<std::vector<double>> sine_tapers(std::size_t n, int count) {
  std::vector<std::vector<double>> tapers(static_cast<std::size_t>(count), std::vector<double>(n));
  const double np1 = static_cast<double>(n + 1);
  const double amp = std::sqrt(2.0 / np1);
  for (int k = 1; k <= count; ++k)
    for (std::size_t t = 0; t < n; ++t)
      tapers[static_cast<std::size_t>(k - 1)][t] =
          amp * std::sin(std::numbers::pi * k * static_cast<double>(t + 1) / np1);
  return tapers;
}

/// Fraction of a taper's energy inside |f| <= w, from its autocorrelation.
inline double taper_concentration(std::span<const double> taper, double w) {
  const std::size_t n = taper.size();
  std::vector<double> padded(2 * n, 0.0);
  std::copy(taper.begin(), taper.end(), padded.begin());
  const auto V = fft::forward_real(padded);
  // |V|^2 is real and even, so its forward transform is len * autocorrelation
  std::vector<std::complex<double>> mag(2 * n);
  for (std::size_t k = 0; k < 2 * n; ++k) {
    const std::size_t kk = k <= n ? k : 2 * n - k;
    mag[k] = std::norm(V[kk]);
  }
  const auto r = fft::forward(mag);
  const double len = static_cast<double>(2 * n);
  double energy = r[0].real() / len;
  double inband = 2.0 * w * energy;
  for (std::size_t tau = 1; tau < n; ++tau) {
    const double rt = r[tau].real() / len;
    inband += 2.0 * rt * std::sin(2.0 * std::numbers::pi * w * static_cast<double>(tau)) /
              (std::numbers::pi * static_cast<double>(tau));
  }
  return std::clamp(inband / energy, 1e-12, 1.0);
}

/// Eigenspectrum of x (already mean-removed) under a single taper.
inline std::vector<double> eigenspectrum(std::span<const double> y, std::span<const double> taper) {
  std::vector<double> tx(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) tx[t] = y[t] * taper[t];
  return detail::positive_power(tx);
}

/// Adaptive multitaper estimate with sine tapers and Thomson-style weights.
inline SpectrumEstimate multitaper(std::span<const double> x, int tapers = 7) {
  if (tapers < 1) throw ParameterDomainError("multitaper needs at least one taper");
  const auto y = detail::demeaned(x);
  const std::size_t n = y.size();
  if (static_cast<std::size_t>(tapers) > n / 4)
    throw ParameterDomainError("taper count exceeds floor(n/4)");

  const auto v = sine_tapers(n, tapers);
  const auto K = static_cast<std::size_t>(tapers);
  std::vector<std::vector<double>> eig(K);
  for (std::size_t k = 0; k < K; ++k) eig[k] = eigenspectrum(y, v[k]);

  const std::size_t nf = n / 2;
  std::vector<double> s(nf);
  if (K == 1) {
    s = eig[0];
  } else {
    const double w = static_cast<double>(tapers + 1) / (2.0 * static_cast<double>(n + 1));
    std::vector<double> lambda(K);
    for (std::size_t k = 0; k < K; ++k) lambda[k] = taper_concentration(v[k], w);
    double sigma2 = 0.0;
    for (double val : y) sigma2 += val * val;
    sigma2 /= static_cast<double>(n);

    for (std::size_t j = 0; j < nf; ++j) {
      double cur = 0.5 * (eig[0][j] + eig[1][j]);
      for (int iter = 0; iter < 100; ++iter) {
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const double d = std::sqrt(lambda[k]) * cur / (lambda[k] * cur + (1.0 - lambda[k]) * sigma2);
          num += d * d * eig[k][j];
          den += d * d;
        }
        const double next = num / den;
        const bool done = std::abs(next - cur) <= 1e-10 * cur;
        cur = next;
        if (done) break;
      }
      s[j] = cur;
    }
  }
  detail::require_positive(s);
  return {detail::fourier_frequencies(n), std::move(s), Method::Multitaper, tapers};
}

struct SlopeFit {
  double slope = 0.0;
  double implied_hurst = 0.5;
};

/// OLS of log power on log frequency over the lowest `freq_fraction` of the
/// frequencies; a power law f^(1-2H) gives slope 1-2H.
inline SlopeFit loglog_slope(const SpectrumEstimate& spec, double freq_fraction = 1.0) {
  if (!(freq_fraction > 0.0 && freq_fraction <= 1.0))
    throw ParameterDomainError("frequency fraction must lie in (0, 1]");
  const auto m = static_cast<std::size_t>(
      std::ceil(freq_fraction * static_cast<double>(spec.frequencies.size()) - 1e-9));
  if (m < 8) throw DegenerateInputError("fewer than 8 frequencies retained for slope fit");
  double sx = 0, sy = 0;
  for (std::size_t j = 0; j < m; ++j) {
    sx += std::log(spec.frequencies[j]);
    sy += std::log(spec.power[j]);
  }
  const double mx = sx / static_cast<double>(m), my = sy / static_cast<double>(m);
  double sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double dx = std::log(spec.frequencies[j]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(spec.power[j]) - my);
  }
  const double slope = sxy / sxx;
  return {slope, (1.0 - slope) / 2.0};
}

}  // namespace lmr::spectral
