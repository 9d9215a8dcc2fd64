#pragma once

// Pseudoproxy generator: forcings, a latent temperature from the process
// regression, and a reduced proxy from the proxy regression, each with its
// own stationary noise. Deterministic given the seed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/frame.hpp"
#include "lmrecon/noise_models.hpp"

namespace lmr::synthetic {

struct TrueParameters {
  double alpha0 = 0.2;
  double alpha1 = 0.8;
  std::vector<double> beta{-0.3, 0.2, -0.3, 0.8};  // beta0..beta3; only beta0 is used without forcings
  double sigma_P = 0.3;
  double sigma_T = 0.2;
  NoiseKind proxy_error = NoiseKind::FGN;
  double H = 0.7;  // proxy-level memory parameter (H, or phi for AR(1))
  NoiseKind process_error = NoiseKind::FGN;
  double K = 0.7;  // process-level memory parameter
};

struct ForcingShapes {
  double solar_amplitude = 1.0;
  double solar_period = 11.0;
  double volcanic_rate = 0.05;  // probability of an eruption year
  double volcanic_mean = 3.0;   // mean magnitude of an eruption
  double ghg_base = 280.0;
  double ghg_log_rise = 2.0;    // log C rises by this much over the record, mostly at the end
};

struct SyntheticSpec {
  Window years{1, 600};
  TrueParameters truth;
  ForcingShapes forcing;
  bool forcings = true;
  int panel_size = 0;          // noisy copies of RP for proxy-reduction experiments
  double panel_noise = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (years.length() < 16) throw ConfigError("synthetic record needs at least 16 years");
    if (truth.beta.size() != 4) throw ConfigError("truth needs four beta coefficients");
    if (truth.sigma_P < 0.0 || truth.sigma_T < 0.0) throw ConfigError("noise scales must be nonnegative");
    const auto check = [](NoiseKind k, double p) {
      if (k == NoiseKind::White) return;
      const auto r = memory_param_range(k);
      if (!(p > r.lo && p < r.hi)) throw ConfigError("memory parameter outside its open range");
    };
    check(truth.proxy_error, truth.H);
    check(truth.process_error, truth.K);
    if (forcing.volcanic_rate < 0.0 || forcing.volcanic_rate > 1.0 || forcing.volcanic_mean <= 0.0 ||
        forcing.ghg_base <= 0.0 || forcing.solar_period <= 0.0)
      throw ConfigError("invalid forcing shape");
    if (panel_size < 0 || panel_noise < 0.0) throw ConfigError("invalid proxy panel settings");
  }
};

struct SyntheticData {
  TimeSeriesFrame frame;           // year, rp, temperature, S, V, C[, p1..pk]
  TrueParameters truth;
  std::vector<double> temperature;  // latent truth, every year
};

namespace detail {

template <typename G>
std::vector<double> scaled_noise(NoiseKind kind, double param, double scale, std::size_t n, G& rng) {
  if (scale == 0.0) {
    // keep the stream aligned with the nonzero case
    (void)sample_noise(NoiseModel{kind, kind == NoiseKind::White ? 0.5 : param, 1.0}, n, rng);
    return std::vector<double>(n, 0.0);
  }
  return sample_noise(NoiseModel{kind, kind == NoiseKind::White ? 0.5 : param, scale}, n, rng);
}

}  // namespace detail

inline SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n = static_cast<std::size_t>(spec.years.length());
  std::vector<int> years(n);
  for (std::size_t i = 0; i < n; ++i) years[i] = spec.years.first + static_cast<int>(i);

  // forcings
  const auto& fs = spec.forcing;
  std::vector<double> S(n), V(n, 0.0), C(n);
  std::bernoulli_distribution erupt(fs.volcanic_rate);
  std::exponential_distribution<double> size(1.0 / fs.volcanic_mean);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    const double u = t / static_cast<double>(n - 1);
    S[i] = fs.solar_amplitude * std::sin(2.0 * std::numbers::pi * t / fs.solar_period);
    if (erupt(rng)) V[i] = -size(rng);
    // slow start, steep end: log C = rise * u^4
    C[i] = fs.ghg_base * std::exp(fs.ghg_log_rise * std::pow(u, 4.0));
  }

  const auto& tp = spec.truth;
  const auto eps = detail::scaled_noise(tp.process_error, tp.K, tp.sigma_T, n, rng);
  const auto eta = detail::scaled_noise(tp.proxy_error, tp.H, tp.sigma_P, n, rng);

  SyntheticData out{TimeSeriesFrame(years), tp, std::vector<double>(n)};
  std::vector<double> rp(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = tp.beta[0];
    if (spec.forcings)
      mean += tp.beta[1] * S[i] + tp.beta[2] * std::log(1.0 - V[i]) + tp.beta[3] * std::log(C[i]);
    out.temperature[i] = mean + eps[i];
    rp[i] = tp.alpha0 + tp.alpha1 * out.temperature[i] + eta[i];
  }

  out.frame.add_column({"rp", Role::Proxy, Transform::Identity, rp});
  out.frame.add_column({"temperature", Role::Temperature, Transform::Identity, out.temperature});
  out.frame.add_column({"S", Role::Forcing, Transform::Identity, S});
  out.frame.add_column({"V", Role::Forcing, Transform::Identity, V});
  out.frame.add_column({"C", Role::Forcing, Transform::Identity, C});

  std::normal_distribution<double> z;
  for (int k = 1; k <= spec.panel_size; ++k) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = rp[i] + spec.panel_noise * z(rng);
    out.frame.add_column({"p" + std::to_string(k), Role::Proxy, Transform::Identity, std::move(p)});
  }
  return out;
}

}  // namespace lmr::synthetic
