#pragma once

/** @file
 * Two-level hierarchical model for temperature reconstruction
 *
 *   RP_t = alpha0 + alpha1 T_t + sigma_P eta_t
 *   T_t  = beta0 + beta1 S_t + beta2 V~_t + beta3 C~_t + sigma_T eps_t
 *
 * with eta and eps independent stationary unit-variance processes (white,
 * AR(1) or fGn). Temperatures are observed over the calibration window and
 * latent over the prediction window. Sampling is a systematic-scan Gibbs
 * sweep alpha -> beta -> sigma_P^2 -> sigma_T^2 -> H -> K -> T_u, where the
 * memory parameters H and K are updated by Metropolis-Hastings with a
 * truncated-normal random-walk proposal and every other block is drawn
 * exactly from its Gaussian or inverse-gamma full conditional.
 *
 * The full conditionals all follow from one identity: for y ~ N(X b, s2 S)
 * with P = S^{-1} and prior b ~ N(m, C), the posterior precision is
 * X'PX/s2 + C^{-1} and the posterior mean solves it against
 * X'Py/s2 + C^{-1}m. For the latent temperatures the joint Gaussian in T
 * has precision Q = alpha1^2/sP2 P_H + P_K/sT2 and linear term
 * b = alpha1/sP2 P_H (RP - alpha0) + P_K X beta / sT2; the latent block is
 * conditioned on the observed block through Q.
 */

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "lmrecon/errors.hpp"
#include "lmrecon/frame.hpp"
#include "lmrecon/noise_models.hpp"
#include "lmrecon/stats.hpp"

namespace lmr::hbm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Scenario configuration

struct ScenarioSpec {
  NoiseKind proxy_error;
  NoiseKind process_error;
  bool forcings;
};

/// Error structure and forcing inclusion of scenarios A-H.
inline ScenarioSpec scenario_spec(char label) {
  switch (label) {
    case 'A': return {NoiseKind::FGN, NoiseKind::FGN, true};
    case 'B': return {NoiseKind::FGN, NoiseKind::AR1, true};
    case 'C': return {NoiseKind::AR1, NoiseKind::FGN, true};
    case 'D': return {NoiseKind::AR1, NoiseKind::AR1, true};
    case 'E': return {NoiseKind::White, NoiseKind::White, true};
    case 'F': return {NoiseKind::FGN, NoiseKind::FGN, false};
    case 'G': return {NoiseKind::AR1, NoiseKind::AR1, false};
    case 'H': return {NoiseKind::White, NoiseKind::White, false};
    default: throw ConfigError(std::string("unknown scenario '") + label + "' (expected A-H)");
  }
}

struct Priors {
  VectorXd alpha_mean = (VectorXd(2) << 0.0, 1.0).finished();
  MatrixXd alpha_cov = MatrixXd::Identity(2, 2);
  VectorXd beta_mean = (VectorXd(4) << 0.0, 1.0, 1.0, 1.0).finished();
  MatrixXd beta_cov = MatrixXd::Identity(4, 4);
  double sigma_shape = 2.0;  // inverse-gamma shape for both variances
  double sigma_rate = 0.1;   // inverse-gamma scale for both variances
};

struct ChainSettings {
  int iterations = 5000;
  int burn_in = 1000;
  int chains = 1;
  std::uint64_t seed = 1;
  double mh_step_H = 0.02;
  double mh_step_K = 0.02;
  bool adapt_during_burn_in = true;
};

struct ScenarioConfig {
  char label = 'A';
  NoiseKind proxy_error = NoiseKind::FGN;
  NoiseKind process_error = NoiseKind::FGN;
  bool forcings_included = true;
  ChainSettings chain;
  Priors priors;

  static ScenarioConfig for_label(char label, ChainSettings chain = {}) {
    const auto s = scenario_spec(label);
    ScenarioConfig c;
    c.label = label;
    c.proxy_error = s.proxy_error;
    c.process_error = s.process_error;
    c.forcings_included = s.forcings;
    c.chain = chain;
    return c;
  }

  /// Number of process-level regression coefficients.
  Index beta_size() const { return forcings_included ? 4 : 1; }

  void validate() const {
    const auto s = scenario_spec(label);
    if (s.proxy_error != proxy_error || s.process_error != process_error ||
        s.forcings != forcings_included)
      throw ConfigError(std::string("configuration does not match scenario ") + label);
    if (chain.iterations < 1) throw ConfigError("iterations must be positive");
    if (chain.burn_in < 0 || chain.burn_in >= chain.iterations)
      throw ConfigError("burn_in must satisfy 0 <= burn_in < iterations");
    if (chain.chains < 1) throw ConfigError("chains must be at least 1");
    if (!(chain.mh_step_H > 0.0) || !(chain.mh_step_K > 0.0))
      throw ConfigError("Metropolis-Hastings step sizes must be positive");
    if (priors.alpha_mean.size() != 2 || priors.alpha_cov.rows() != 2 || priors.alpha_cov.cols() != 2)
      throw ConfigError("alpha prior must be two-dimensional");
    if (priors.beta_mean.size() < beta_size() || priors.beta_cov.rows() < beta_size())
      throw ConfigError("beta prior has too few components");
    if (!(priors.sigma_shape > 0.0) || !(priors.sigma_rate > 0.0))
      throw ConfigError("inverse-gamma prior parameters must be positive");
  }
};

// ---------------------------------------------------------------------------
// Data

struct ForcingTransform {
  std::vector<double> volcanic;  // log(1 - V)
  std::vector<double> ghg;       // log(C)
};

/// V~ = log(-V + 1), C~ = log(C); throws naming the first offending year.
inline ForcingTransform transform_forcings(std::span<const double> volcanic, std::span<const double> ghg,
                                           std::span<const int> years = {}) {
  if (volcanic.size() != ghg.size()) throw ShapeError("forcing series differ in length");
  auto year_of = [&](std::size_t i) {
    return years.size() == volcanic.size() ? std::to_string(years[i]) : "index " + std::to_string(i);
  };
  ForcingTransform out;
  out.volcanic.resize(volcanic.size());
  out.ghg.resize(ghg.size());
  for (std::size_t i = 0; i < volcanic.size(); ++i) {
    const double a = 1.0 - volcanic[i];
    if (!(a > 0.0)) throw ParameterDomainError("volcanic forcing gives -V+1 <= 0 in year " + year_of(i));
    if (!(ghg[i] > 0.0)) throw ParameterDomainError("greenhouse forcing is not positive in year " + year_of(i));
    out.volcanic[i] = std::log(a);
    out.ghg[i] = std::log(ghg[i]);
  }
  return out;
}

/// Inputs to the sampler on a contiguous year axis.
struct ModelData {
  std::vector<int> years;
  VectorXd proxy;              // RP, every year
  VectorXd temperature;        // NaN at latent years
  MatrixXd design;             // n x p process-level design (intercept first)
  std::vector<Index> observed; // calibration indices
  std::vector<Index> latent;   // prediction indices

  Index size() const { return proxy.size(); }
};

/// Assemble model data from raw series on a shared year axis. The model span
/// is the union of the two windows, which must be contiguous and disjoint.
/// Raw volcanic and greenhouse forcings are transformed here.
inline ModelData build_model_data(const std::vector<int>& years, std::span<const double> proxy,
                                  std::span<const double> temperature,
                                  std::optional<std::array<std::span<const double>, 3>> forcings,
                                  const Window& calibration, const Window& prediction) {
  if (calibration.first <= prediction.last && prediction.first <= calibration.last)
    throw ConfigError("calibration and prediction windows overlap");
  const int first = std::min(calibration.first, prediction.first);
  const int last = std::max(calibration.last, prediction.last);
  if (calibration.length() + prediction.length() != last - first + 1)
    throw ConfigError("calibration and prediction windows must be adjacent");

  auto position = [&](int year) -> std::size_t {
    const auto it = std::lower_bound(years.begin(), years.end(), year);
    if (it == years.end() || *it != year) throw DataError("year " + std::to_string(year) + " missing from data");
    return static_cast<std::size_t>(it - years.begin());
  };

  const Index n = last - first + 1;
  ModelData d;
  d.proxy.resize(n);
  d.temperature = VectorXd::Constant(n, kMissing);
  d.design.resize(n, forcings ? 4 : 1);
  std::vector<double> S, V, C;
  for (Index i = 0; i < n; ++i) {
    const int year = first + static_cast<int>(i);
    d.years.push_back(year);
    const std::size_t p = position(year);
    if (is_missing(proxy[p])) throw DataError("proxy missing in year " + std::to_string(year));
    d.proxy(i) = proxy[p];
    if (calibration.contains(year)) {
      if (is_missing(temperature[p]))
        throw DataError("instrumental temperature missing in calibration year " + std::to_string(year));
      d.temperature(i) = temperature[p];
      d.observed.push_back(i);
    } else {
      d.latent.push_back(i);
    }
    if (forcings) {
      for (const auto& f : *forcings)
        if (is_missing(f[p])) throw DataError("forcing missing in year " + std::to_string(year));
      S.push_back((*forcings)[0][p]);
      V.push_back((*forcings)[1][p]);
      C.push_back((*forcings)[2][p]);
    }
  }
  d.design.col(0).setOnes();
  if (forcings) {
    const auto tf = transform_forcings(V, C, d.years);
    for (Index i = 0; i < n; ++i) {
      d.design(i, 1) = S[static_cast<std::size_t>(i)];
      d.design(i, 2) = tf.volcanic[static_cast<std::size_t>(i)];
      d.design(i, 3) = tf.ghg[static_cast<std::size_t>(i)];
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// State and draws

struct ModelState {
  Eigen::Vector2d alpha{0.0, 1.0};
  VectorXd beta;
  double sigma_P2 = 0.1;
  double sigma_T2 = 0.1;
  double H = 0.5;  // proxy-level memory parameter (H for fGn, phi for AR(1))
  double K = 0.5;  // process-level memory parameter
  VectorXd T_u;

  /// Full temperature vector: observed values, then the current latent draw.
  VectorXd full_temperature(const ModelData& d) const {
    VectorXd T = d.temperature;
    for (std::size_t j = 0; j < d.latent.size(); ++j) T(d.latent[j]) = T_u(static_cast<Index>(j));
    return T;
  }
};

struct PosteriorDraws {
  std::vector<std::string> parameter_names;
  MatrixXd parameters;              // kept iteration x parameter
  std::vector<int> latent_years;
  MatrixXd latent;                  // kept iteration x prediction year
  std::vector<int> calibration_years;
  MatrixXd calibration_predictive;  // kept iteration x calibration year
  ScenarioConfig scenario;
  std::map<std::string, double> acceptance_rates;
  double final_step_H = 0.0;
  double final_step_K = 0.0;
  // likelihood evaluations performed by the MH steps, per level
  long proxy_likelihood_evals = 0;
  long process_likelihood_evals = 0;
};

inline std::string memory_name(NoiseKind kind, bool proxy_level) {
  if (kind == NoiseKind::AR1) return proxy_level ? "phi_P" : "phi_T";
  return proxy_level ? "H" : "K";
}

inline std::vector<std::string> parameter_names(const ScenarioConfig& c) {
  std::vector<std::string> n{"alpha0", "alpha1", "beta0"};
  if (c.forcings_included) {
    n.emplace_back("beta1");
    n.emplace_back("beta2");
    n.emplace_back("beta3");
  }
  n.emplace_back("sigma_P2");
  n.emplace_back("sigma_T2");
  n.push_back(memory_name(c.proxy_error, true));
  n.push_back(memory_name(c.process_error, false));
  return n;
}

// ---------------------------------------------------------------------------
// Full conditionals

struct GaussianConditional {
  VectorXd mean;
  MatrixXd precision;

  MatrixXd covariance() const {
    return precision.llt().solve(MatrixXd::Identity(precision.rows(), precision.cols()));
  }

  template <typename G>
  VectorXd draw(G& rng) const {
    Eigen::LLT<MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success)
      throw NumericalDegeneracyError("conditional precision is not positive definite");
    std::normal_distribution<double> z;
    VectorXd e(mean.size());
    for (Index i = 0; i < e.size(); ++i) e(i) = z(rng);
    // Q = L L' => L'^{-1} e has covariance Q^{-1}
    return mean + llt.matrixU().solve(e);
  }
};

/// Conjugate update for y ~ N(X b, sigma2 * S), b ~ N(prior_mean, prior_cov),
/// given P = S^{-1}.
inline GaussianConditional regression_conditional(const MatrixXd& X, const VectorXd& y,
                                                  const MatrixXd& noise_precision, double sigma2,
                                                  const VectorXd& prior_mean, const MatrixXd& prior_cov) {
  if (!(sigma2 > 0.0)) throw NumericalDegeneracyError("noise variance must be positive");
  const MatrixXd prior_prec =
      prior_cov.llt().solve(MatrixXd::Identity(prior_cov.rows(), prior_cov.cols()));
  GaussianConditional g;
  if (X.rows() == 0) {
    g.precision = prior_prec;
    g.mean = prior_mean;
    return g;
  }
  const MatrixXd PX = noise_precision * X;
  g.precision = X.transpose() * PX / sigma2 + prior_prec;
  const VectorXd rhs = PX.transpose() * y / sigma2 + prior_prec * prior_mean;
  Eigen::LLT<MatrixXd> llt(g.precision);
  if (llt.info() != Eigen::Success)
    throw NumericalDegeneracyError("regression posterior precision is not positive definite");
  g.mean = llt.solve(rhs);
  return g;
}

struct InverseGammaConditional {
  double shape;
  double rate;

  template <typename G>
  double draw(G& rng) const {
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    return 1.0 / gamma(rng);
  }
};

/// sigma^2 | r ~ IG(a + n/2, b + r'Pr/2) for r ~ N(0, sigma^2 P^{-1}).
inline InverseGammaConditional variance_conditional(const VectorXd& residual, const MatrixXd& precision,
                                                    double shape, double rate) {
  if (residual.size() == 0) return {shape, rate};
  const double q = residual.dot(precision * residual);
  if (!(q > 0.0) || !std::isfinite(q))
    throw NumericalDegeneracyError("residual quadratic form is not positive");
  return {shape + 0.5 * static_cast<double>(residual.size()), rate + 0.5 * q};
}

/// Gaussian on the `target` coordinates of x ~ N(Q^{-1} b, Q^{-1}) given the
/// remaining coordinates `fixed_values` at `fixed` indices.
inline GaussianConditional block_conditional(const MatrixXd& Q, const VectorXd& b,
                                             const std::vector<Index>& target,
                                             const std::vector<Index>& fixed,
                                             const VectorXd& fixed_values) {
  GaussianConditional g;
  g.precision = Q(target, target);
  VectorXd rhs = b(target);
  if (!fixed.empty()) rhs -= Q(target, fixed) * fixed_values;
  Eigen::LLT<MatrixXd> llt(g.precision);
  if (llt.info() != Eigen::Success)
    throw NumericalDegeneracyError("latent precision is not positive definite");
  g.mean = llt.solve(rhs);
  return g;
}

/// Joint precision and linear term of the full temperature vector given the
/// proxy, forcings and all parameters.
struct TemperatureField {
  MatrixXd Q;
  VectorXd b;
};

inline TemperatureField temperature_field(const ModelData& d, const ModelState& s, const MatrixXd& P_H,
                                          const MatrixXd& P_K) {
  const double a0 = s.alpha(0), a1 = s.alpha(1);
  TemperatureField f;
  f.Q = (a1 * a1 / s.sigma_P2) * P_H + P_K / s.sigma_T2;
  const VectorXd centered = d.proxy.array() - a0;
  f.b = (a1 / s.sigma_P2) * (P_H * centered) + P_K * (d.design * s.beta) / s.sigma_T2;
  return f;
}

/// Full conditional of the latent temperatures given everything else.
inline GaussianConditional latent_conditional(const ModelData& d, const ModelState& s, const MatrixXd& P_H,
                                              const MatrixXd& P_K) {
  const auto f = temperature_field(d, s, P_H, P_K);
  return block_conditional(f.Q, f.b, d.latent, d.observed, d.temperature(d.observed));
}

/// Predictive of the calibration-year temperatures treated as unobserved,
/// given the current latent draw and parameters.
inline GaussianConditional calibration_predictive(const ModelData& d, const ModelState& s,
                                                  const MatrixXd& P_H, const MatrixXd& P_K) {
  const auto f = temperature_field(d, s, P_H, P_K);
  return block_conditional(f.Q, f.b, d.observed, d.latent, s.T_u);
}

// ---------------------------------------------------------------------------
// Metropolis-Hastings on a bounded interval

/// Log normalizer of N(center, step) truncated to (lo, hi).
inline double truncated_log_mass(double center, double step, const ParamRange& r) {
  const double z = stats::normal_cdf((r.hi - center) / step) - stats::normal_cdf((r.lo - center) / step);
  return std::log(std::max(z, 1e-300));
}

/// Log acceptance ratio of a truncated-normal random-walk move. The Gaussian
/// kernel is symmetric, so only the truncation masses enter the Hastings
/// correction.
inline double mh_log_acceptance(double current, double proposal, double step, const ParamRange& range,
                                double log_target_current, double log_target_proposal) {
  return log_target_proposal - log_target_current + truncated_log_mass(current, step, range) -
         truncated_log_mass(proposal, step, range);
}

template <typename G>
double propose_truncated(double current, double step, const ParamRange& r, G& rng) {
  std::normal_distribution<double> z;
  for (int tries = 0; tries < 100000; ++tries) {
    const double x = current + step * z(rng);
    if (x > r.lo && x < r.hi) return x;
  }
  throw NumericalDegeneracyError("truncated proposal failed to land inside the support");
}

struct MhOutcome {
  double value;
  bool accepted;
};

template <typename G>
MhOutcome mh_step(double current, double step, const ParamRange& range,
                  const std::function<double(double)>& log_target, G& rng) {
  const double proposal = propose_truncated(current, step, range, rng);
  const double log_ratio =
      mh_log_acceptance(current, proposal, step, range, log_target(current), log_target(proposal));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (log_ratio >= 0.0 || std::log(u(rng)) < log_ratio) return {proposal, true};
  return {current, false};
}

// ---------------------------------------------------------------------------
// Sampler

struct LevelCovariance {
  NoiseKind kind = NoiseKind::White;
  double param = 0.5;
  MatrixXd precision;  // inverse of the unit-scale Toeplitz covariance

  static LevelCovariance make(NoiseKind kind, double param, Index n) {
    LevelCovariance c{kind, param, {}};
    if (kind == NoiseKind::White) {
      c.precision = MatrixXd::Identity(n, n);
    } else {
      const auto g = acvf(NoiseModel{kind, param, 1.0}, static_cast<std::size_t>(n - 1));
      c.precision = toeplitz_inverse(g, static_cast<std::size_t>(n)).inverse;
    }
    return c;
  }
};

/// Log-likelihood of a residual vector under a scaled noise model.
inline double residual_loglik(const VectorXd& r, NoiseKind kind, double param, double sigma2) {
  const NoiseModel m{kind, param, std::sqrt(sigma2)};
  const auto g = acvf(m, static_cast<std::size_t>(r.size() - 1));
  return loglik_durbin_levinson(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), g);
}

/// One MH update of a level's memory parameter given its residual vector and
/// variance. `evals` counts likelihood evaluations when given.
template <typename G>
MhOutcome mh_update_memory(const VectorXd& residual, NoiseKind kind, double current, double sigma2, double step,
                           G& rng, long* evals = nullptr) {
  if (kind == NoiseKind::White) throw ConfigError("white noise has no memory parameter to update");
  if (!(step > 0.0)) throw ConfigError("Metropolis-Hastings step must be positive");
  const auto target = [&](double v) {
    if (evals) ++*evals;
    return residual_loglik(residual, kind, v, sigma2);
  };
  return mh_step(current, step, memory_param_range(kind), target, rng);
}

/// Deterministic starting point from least squares on the calibration block.
inline ModelState initial_state(const ScenarioConfig& c, const ModelData& d) {
  ModelState s;
  const Index p = c.beta_size();
  const auto& obs = d.observed;
  const Index no = static_cast<Index>(obs.size());
  const VectorXd T0 = d.temperature(obs);
  const VectorXd rp0 = d.proxy(obs);

  if (no >= 3) {
    MatrixXd Z(no, 2);
    Z.col(0).setOnes();
    Z.col(1) = T0;
    s.alpha = Z.colPivHouseholderQr().solve(rp0);
    s.sigma_P2 = std::max((rp0 - Z * s.alpha).squaredNorm() / static_cast<double>(no), 1e-4);
  }
  const MatrixXd X0 = d.design(obs, Eigen::seqN(0, p));
  s.beta = c.priors.beta_mean.head(p);
  if (no > p + 1) {
    s.beta = X0.colPivHouseholderQr().solve(T0);
    s.sigma_T2 = std::max((T0 - X0 * s.beta).squaredNorm() / static_cast<double>(no), 1e-4);
  }
  s.H = c.proxy_error == NoiseKind::AR1 ? 0.0 : 0.5;
  s.K = c.process_error == NoiseKind::AR1 ? 0.0 : 0.5;

  const MatrixXd XL = d.design(d.latent, Eigen::seqN(0, p));
  s.T_u = XL * s.beta;
  if (std::abs(s.alpha(1)) > 1e-3) s.T_u = (d.proxy(d.latent).array() - s.alpha(0)) / s.alpha(1);
  return s;
}

/// One chain. `chain_index` selects an independent RNG stream derived from
/// (seed, chain_index).
inline PosteriorDraws run_chain(const ScenarioConfig& config, const ModelData& data, int chain_index = 0) {
  config.validate();
  if (data.design.cols() != config.beta_size())
    throw ConfigError("design has " + std::to_string(data.design.cols()) + " columns; scenario " +
                      config.label + " needs " + std::to_string(config.beta_size()));
  if (data.observed.size() < 3) throw DataError("calibration window needs at least 3 years");

  std::seed_seq seq{static_cast<std::uint32_t>(config.chain.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(config.chain.seed >> 32),
                    static_cast<std::uint32_t>(chain_index)};
  Rng rng(seq);

  const Index n = data.size();
  const Index p = config.beta_size();
  const VectorXd beta_mean = config.priors.beta_mean.head(p);
  const MatrixXd beta_cov = config.priors.beta_cov.topLeftCorner(p, p);

  ModelState s = initial_state(config, data);
  auto cov_H = LevelCovariance::make(config.proxy_error, s.H, n);
  auto cov_K = LevelCovariance::make(config.process_error, s.K, n);

  PosteriorDraws out;
  out.scenario = config;
  out.parameter_names = parameter_names(config);
  const int kept = config.chain.iterations - config.chain.burn_in;
  out.parameters.resize(kept, static_cast<Index>(out.parameter_names.size()));
  for (Index j : data.latent) out.latent_years.push_back(data.years[static_cast<std::size_t>(j)]);
  for (Index j : data.observed) out.calibration_years.push_back(data.years[static_cast<std::size_t>(j)]);
  out.latent.resize(kept, static_cast<Index>(data.latent.size()));
  out.calibration_predictive.resize(kept, static_cast<Index>(data.observed.size()));

  double step_H = config.chain.mh_step_H, step_K = config.chain.mh_step_K;
  long acc_H = 0, acc_K = 0, window_acc_H = 0, window_acc_K = 0;
  constexpr int kAdaptWindow = 50;

  MatrixXd Z(n, 2);
  Z.col(0).setOnes();

  for (int it = 0; it < config.chain.iterations; ++it) {
    VectorXd T = s.full_temperature(data);

    // alpha | RP, T
    Z.col(1) = T;
    s.alpha = regression_conditional(Z, data.proxy, cov_H.precision, s.sigma_P2, config.priors.alpha_mean,
                                     config.priors.alpha_cov)
                  .draw(rng);
    // beta | T
    s.beta = regression_conditional(data.design, T, cov_K.precision, s.sigma_T2, beta_mean, beta_cov).draw(rng);

    // variances
    VectorXd r_P = data.proxy - Z * s.alpha;
    VectorXd r_T = T - data.design * s.beta;
    s.sigma_P2 = variance_conditional(r_P, cov_H.precision, config.priors.sigma_shape, config.priors.sigma_rate)
                     .draw(rng);
    s.sigma_T2 = variance_conditional(r_T, cov_K.precision, config.priors.sigma_shape, config.priors.sigma_rate)
                     .draw(rng);

    // memory parameters
    if (config.proxy_error != NoiseKind::White) {
      const auto mh =
          mh_update_memory(r_P, config.proxy_error, s.H, s.sigma_P2, step_H, rng, &out.proxy_likelihood_evals);
      if (mh.accepted) {
        s.H = mh.value;
        cov_H = LevelCovariance::make(config.proxy_error, s.H, n);
        ++window_acc_H;
        if (it >= config.chain.burn_in) ++acc_H;
      }
    }
    if (config.process_error != NoiseKind::White) {
      const auto mh =
          mh_update_memory(r_T, config.process_error, s.K, s.sigma_T2, step_K, rng, &out.process_likelihood_evals);
      if (mh.accepted) {
        s.K = mh.value;
        cov_K = LevelCovariance::make(config.process_error, s.K, n);
        ++window_acc_K;
        if (it >= config.chain.burn_in) ++acc_K;
      }
    }

    // latent temperatures, jointly
    if (!data.latent.empty()) s.T_u = latent_conditional(data, s, cov_H.precision, cov_K.precision).draw(rng);

    if (config.chain.adapt_during_burn_in && it < config.chain.burn_in && (it + 1) % kAdaptWindow == 0) {
      auto tune = [](double& step, long& hits) {
        const double rate = static_cast<double>(hits) / kAdaptWindow;
        if (rate > 0.5) step *= 1.25;
        if (rate < 0.2) step *= 0.8;
        hits = 0;
      };
      tune(step_H, window_acc_H);
      tune(step_K, window_acc_K);
    }

    if (it >= config.chain.burn_in) {
      const Index row = it - config.chain.burn_in;
      Index c = 0;
      out.parameters(row, c++) = s.alpha(0);
      out.parameters(row, c++) = s.alpha(1);
      for (Index j = 0; j < p; ++j) out.parameters(row, c++) = s.beta(j);
      out.parameters(row, c++) = s.sigma_P2;
      out.parameters(row, c++) = s.sigma_T2;
      out.parameters(row, c++) = s.H;
      out.parameters(row, c++) = s.K;
      if (!data.latent.empty()) out.latent.row(row) = s.T_u.transpose();
      out.calibration_predictive.row(row) =
          calibration_predictive(data, s, cov_H.precision, cov_K.precision).draw(rng).transpose();
    }
  }

  const double kd = static_cast<double>(kept);
  if (config.proxy_error != NoiseKind::White) out.acceptance_rates["H"] = static_cast<double>(acc_H) / kd;
  if (config.process_error != NoiseKind::White) out.acceptance_rates["K"] = static_cast<double>(acc_K) / kd;
  out.final_step_H = step_H;
  out.final_step_K = step_K;
  return out;
}

/// All configured chains, run concurrently with independent streams. Results
/// are ordered by chain index.
inline std::vector<PosteriorDraws> run_chains(const ScenarioConfig& config, const ModelData& data) {
  config.validate();
  const int m = config.chain.chains;
  std::vector<PosteriorDraws> out(static_cast<std::size_t>(m));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(m));
  std::vector<std::thread> workers;
  for (int c = 0; c < m; ++c)
    workers.emplace_back([&, c] {
      try {
        out[static_cast<std::size_t>(c)] = run_chain(config, data, c);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace lmr::hbm
