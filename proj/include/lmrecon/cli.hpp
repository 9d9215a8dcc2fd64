#pragma once

// Command-line front end: synth, reduce, spectrum, memtest, reconstruct,
// validate and tcr. run() maps error families to exit codes:
// 0 success, 2 configuration, 3 data, 4 numerical.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lmrecon/config.hpp"
#include "lmrecon/errors.hpp"
#include "lmrecon/frame.hpp"
#include "lmrecon/hbm_sampler.hpp"
#include "lmrecon/memory_tests.hpp"
#include "lmrecon/noise_models.hpp"
#include "lmrecon/proxy_reduction.hpp"
#include "lmrecon/spectral.hpp"
#include "lmrecon/synthetic.hpp"
#include "lmrecon/validation.hpp"

namespace lmr::cli {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void append_line(const fs::path& path, const std::string& line) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot append to " + path.string());
  out << line << "\n";
}

/// "kind" or "kind:param", e.g. "fgn:0.7", "ar1:0.5", "white".
inline std::pair<NoiseKind, double> parse_noise_spec(const std::string& s) {
  const auto colon = s.find(':');
  const auto kind = parse_noise_kind(s.substr(0, colon));
  double param = kind == NoiseKind::AR1 ? 0.0 : 0.5;
  if (colon != std::string::npos) {
    try {
      param = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad noise parameter in '" + s + "'");
    }
  }
  return {kind, param};
}

/// "name=value" pairs from repeated options.
inline std::map<std::string, std::string> parse_pairs(const std::vector<std::string>& items, const char* what) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(std::string(what) + " must be NAME=VALUE, got '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

inline std::string default_column(const TimeSeriesFrame& f, const std::string& requested, const fs::path& path) {
  if (!requested.empty()) return requested;
  if (f.names().empty()) throw DataError(path.string() + " has no data columns");
  return f.names().front();
}

inline std::vector<double> present_values(const TimeSeriesFrame& f, const std::string& column) {
  std::vector<double> out;
  for (double v : f.column(column).values)
    if (!is_missing(v)) out.push_back(v);
  return out;
}

inline std::string fmt(double v) { return csv::format_number(v); }

inline csv::DrawTable draw_table(const std::vector<std::string>& columns, const std::vector<const Eigen::MatrixXd*>& blocks,
                                 int iterations, int burn_in) {
  csv::DrawTable t;
  t.columns = columns;
  for (std::size_t c = 0; c < blocks.size(); ++c) {
    const auto& m = *blocks[c];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      t.iterations.push_back(static_cast<long>(c) * iterations + burn_in + r + 1);
      std::vector<double> row(static_cast<std::size_t>(m.cols()));
      for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(r, k);
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline std::vector<std::string> year_names(const std::vector<int>& years) {
  std::vector<std::string> out;
  for (int y : years) out.push_back(std::to_string(y));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string out_dir;
  std::uint64_t seed = 1;
  std::string years = "1-600";
  std::string calibration = "301-600";
  std::string proxy_noise = "fgn:0.7";
  std::string process_noise = "fgn:0.7";
  bool no_forcings = false;
  int panel = 0;
  double panel_noise = 0.5;
  std::vector<double> alpha{0.2, 0.8};
  std::vector<double> beta{-0.3, 0.2, -0.3, 0.8};
  double sigma_p = 0.3;
  double sigma_t = 0.2;
};

inline int cmd_synth(const SynthOptions& o, std::ostream& out) {
  synthetic::SyntheticSpec spec;
  spec.years = parse_window(o.years);
  const auto cal = parse_window(o.calibration);
  if (cal.first < spec.years.first || cal.last > spec.years.last)
    throw ConfigError("calibration window lies outside the synthetic record");
  if (cal.first != spec.years.first && cal.last != spec.years.last)
    throw ConfigError("calibration window must touch one end of the record");
  if (o.alpha.size() != 2 || o.beta.size() != 4) throw ConfigError("--alpha takes 2 values and --beta 4");
  spec.truth.alpha0 = o.alpha[0];
  spec.truth.alpha1 = o.alpha[1];
  spec.truth.beta = o.beta;
  spec.truth.sigma_P = o.sigma_p;
  spec.truth.sigma_T = o.sigma_t;
  std::tie(spec.truth.proxy_error, spec.truth.H) = detail::parse_noise_spec(o.proxy_noise);
  std::tie(spec.truth.process_error, spec.truth.K) = detail::parse_noise_spec(o.process_noise);
  spec.forcings = !o.no_forcings;
  spec.panel_size = o.panel;
  spec.panel_noise = o.panel_noise;
  spec.seed = o.seed;
  const auto data = synthetic::generate(spec);

  const fs::path dir(o.out_dir);
  const auto& f = data.frame;
  csv::write_frame(dir / "proxy.csv", f, std::vector<std::string>{"rp"});
  csv::write_frame(dir / "forcings.csv", f, std::vector<std::string>{"S", "V", "C"});
  csv::write_frame(dir / "truth_temperature.csv", f, std::vector<std::string>{"temperature"});
  csv::write_frame(dir / "temperature.csv", f.slice(cal), std::vector<std::string>{"temperature"});
  if (o.panel > 0) {
    std::vector<std::string> names;
    for (int k = 1; k <= o.panel; ++k) names.push_back("p" + std::to_string(k));
    csv::write_frame(dir / "panel.csv", f, names);
  }

  const Window pred = cal.first == spec.years.first ? Window{cal.last + 1, spec.years.last}
                                                    : Window{spec.years.first, cal.first - 1};
  json truth{{"seed", o.seed},
             {"years", to_string(spec.years)},
             {"calibration", to_string(cal)},
             {"prediction", pred.length() > 0 ? to_string(pred) : ""},
             {"forcings", spec.forcings},
             {"alpha0", spec.truth.alpha0},
             {"alpha1", spec.truth.alpha1},
             {"beta", spec.truth.beta},
             {"sigma_P", spec.truth.sigma_P},
             {"sigma_T", spec.truth.sigma_T},
             {"proxy_error", std::string(to_string(spec.truth.proxy_error))},
             {"H", spec.truth.H},
             {"process_error", std::string(to_string(spec.truth.process_error))},
             {"K", spec.truth.K}};
  csv::write_atomic(dir / "truth.json", truth.dump(2) + "\n");

  if (pred.length() > 0 && pred.last >= pred.first) {
    std::string cfg = "[data]\nproxy = proxy.csv\ntemperature = temperature.csv\nforcings = forcings.csv\n\n[windows]\n";
    cfg += "calibration = " + to_string(cal) + "\nprediction = " + to_string(pred) + "\n\n[chain]\n";
    cfg += "iterations = 5000\nburn_in = 1000\nchains = 1\nseed = " + std::to_string(o.seed) + "\n";
    csv::write_atomic(dir / "reconstruct.cfg", cfg);
  }
  out << "wrote synthetic data to " << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reduce

struct ReduceOptions {
  std::string proxies;
  std::string temperature;
  std::string temperature_column;
  std::string fit_window = "1900-1982";
  std::string standardize_window;  // empty: full record
  std::vector<std::string> transforms;  // name=identity|log|log1m
  std::vector<std::string> columns;
  std::vector<std::string> exclude;
  std::string references_file;          // local series for screening
  std::vector<std::string> references;  // proxy=column
  double level = 0.05;
  std::string out_dir;
};

inline int cmd_reduce(const ReduceOptions& o, std::ostream& out) {
  auto panel = csv::read_frame(o.proxies, Role::Proxy);
  const auto temp = csv::read_frame(o.temperature, Role::Temperature);
  const std::string tcol = detail::default_column(temp, o.temperature_column, o.temperature);
  std::vector<std::string> proxies;
  for (const auto& p : o.columns.empty() ? panel.names() : o.columns) {
    (void)panel.column(p);
    if (std::find(o.exclude.begin(), o.exclude.end(), p) == o.exclude.end()) proxies.push_back(p);
  }
  if (proxies.empty()) throw ConfigError("every proxy is excluded");

  const auto transforms = detail::parse_pairs(o.transforms, "--transform");
  for (const auto& [name, t] : transforms) {
    auto& col = panel.column(name);
    col.transform = parse_transform(t);
    col.values = reduction::apply_transform(panel, col);
    col.transform = Transform::Identity;
  }

  const auto fit = parse_window(o.fit_window);
  const auto stdw = o.standardize_window.empty() ? Window{panel.years().front(), panel.years().back()}
                                                 : parse_window(o.standardize_window);
  for (const auto& p : proxies) panel.column(p).values = reduction::standardize(panel, p, stdw);

  const TimeSeriesFrame frame = panel.merged(temp);
  std::optional<reduction::ScreeningReport> screening;
  if (!o.references.empty()) {
    if (o.references_file.empty()) throw ConfigError("--reference needs --local-series");
    const auto local = csv::read_frame(o.references_file, Role::Temperature);
    for (const auto& c : local.columns())
      if (frame.has(c.name)) throw ConfigError("local series column '" + c.name + "' clashes with an existing column");
    const TimeSeriesFrame both = frame.merged(local);
    const auto refs = detail::parse_pairs(o.references, "--reference");
    std::map<std::string, std::string> ref_map(refs.begin(), refs.end());
    screening = reduction::screen_proxies(both, proxies, ref_map, o.level);
    std::vector<std::string> kept;
    for (const auto& p : proxies)
      if (screening->retained.contains(p)) kept.push_back(p);
    if (kept.empty()) throw DataError("no proxy survived screening");
    proxies = kept;
  }

  const auto rp = reduction::fit_reduced_proxy(frame, tcol, proxies, fit);
  TimeSeriesFrame result(rp.years);
  result.add_column({"rp", Role::Proxy, Transform::Identity, rp.series});
  const fs::path dir(o.out_dir);
  csv::write_frame(dir / "reduced_proxy.csv", result);

  json j{{"intercept", rp.intercept}, {"r_squared", rp.r_squared}, {"fit_window", to_string(rp.fit_window)},
         {"fit_rows", rp.fit_rows}, {"standardize_window", to_string(stdw)}};
  json w = json::object();
  for (const auto& [name, a] : rp.weights) w[name] = a;
  j["weights"] = w;
  if (screening) {
    json rows = json::array();
    for (const auto& r : screening->rows)
      rows.push_back({{"proxy", r.proxy}, {"reference", r.reference}, {"overlap", r.overlap},
                      {"correlation", r.correlation}, {"p_value", r.p_value}, {"retained", r.retained}});
    j["screening"] = rows;
  }
  csv::write_atomic(dir / "reduced_proxy.json", j.dump(2) + "\n");
  out << "reduced " << rp.weights.size() << " proxies, R^2 = " << detail::fmt(rp.r_squared) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// spectrum and memtest

struct SeriesOptions {
  std::string input;
  std::string column;
  std::string window;
  std::string out_dir;
};

inline std::vector<double> load_series(const SeriesOptions& o) {
  auto f = csv::read_frame(o.input, Role::Proxy);
  if (!o.window.empty()) f = f.slice(parse_window(o.window));
  const auto col = detail::default_column(f, o.column, o.input);
  const auto& v = f.column(col).values;
  // interior gaps would break the time index; only leading/trailing gaps are dropped
  std::size_t a = 0, b = v.size();
  while (a < b && is_missing(v[a])) ++a;
  while (b > a && is_missing(v[b - 1])) --b;
  std::vector<double> x(v.begin() + static_cast<std::ptrdiff_t>(a), v.begin() + static_cast<std::ptrdiff_t>(b));
  for (double d : x)
    if (is_missing(d)) throw DataError("column '" + col + "' has interior missing values");
  return x;
}

struct SpectrumOptions {
  SeriesOptions series;
  std::string method = "multitaper";
  int tapers = 7;
  double fraction = 1.0;
};

inline int cmd_spectrum(const SpectrumOptions& o, std::ostream& out) {
  const auto x = load_series(o.series);
  spectral::SpectrumEstimate est;
  if (o.method == "periodogram")
    est = spectral::periodogram(x);
  else if (o.method == "multitaper")
    est = spectral::multitaper(x, o.tapers);
  else
    throw ConfigError("unknown spectrum method '" + o.method + "' (periodogram|multitaper)");
  const auto fit = spectral::loglog_slope(est, o.fraction);

  std::string s = "freq,power,method\n";
  const std::string method(spectral::to_string(est.method));
  for (std::size_t j = 0; j < est.frequencies.size(); ++j)
    s += detail::fmt(est.frequencies[j]) + "," + detail::fmt(est.power[j]) + "," + method + "\n";
  const fs::path dir(o.series.out_dir);
  csv::write_atomic(dir / "spectrum.csv", s);
  json j{{"method", std::string(spectral::to_string(est.method))}, {"tapers", est.taper_count}, {"n", x.size()},
         {"fraction", o.fraction}, {"slope", fit.slope}, {"implied_hurst", fit.implied_hurst}};
  csv::write_atomic(dir / "spectrum.json", j.dump(2) + "\n");
  out << "slope " << detail::fmt(fit.slope) << ", implied H " << detail::fmt(fit.implied_hurst) << "\n";
  return 0;
}

struct MemtestOptions {
  SeriesOptions series;
  std::vector<std::string> tests{"robinson", "beran", "davies-harte"};
  std::string null_model = "white";
  int bandwidth = 0;
};

inline int cmd_memtest(const MemtestOptions& o, std::ostream& out) {
  const auto x = load_series(o.series);
  std::vector<memtest::TestResult> results;
  for (const auto& t : o.tests) {
    if (t == "robinson")
      results.push_back(memtest::robinson_test(x, o.bandwidth > 0 ? std::optional<int>(o.bandwidth) : std::nullopt));
    else if (t == "beran")
      results.push_back(memtest::beran_test(x, parse_noise_kind(o.null_model)));
    else if (t == "davies-harte")
      results.push_back(memtest::davies_harte_test(x));
    else
      throw ConfigError("unknown test '" + t + "' (robinson|beran|davies-harte)");
  }
  std::string s = "test,null,statistic,p_value,estimate,bandwidth\n";
  for (const auto& r : results) {
    s += r.test + "," + r.null_model + "," + detail::fmt(r.statistic) + "," + detail::fmt(r.p_value) + "," +
         (r.estimate ? detail::fmt(*r.estimate) : "") + "," + (r.bandwidth ? std::to_string(*r.bandwidth) : "") + "\n";
  }
  csv::write_atomic(fs::path(o.series.out_dir) / "memtest.csv", s);
  out << s;
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructOptions {
  std::string scenario;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<int> iterations;
  std::optional<int> burn_in;
  std::string out_dir;
};

inline hbm::ScenarioConfig scenario_from_config(const config::Config& cfg, char label) {
  auto sc = hbm::ScenarioConfig::for_label(label);
  auto& ch = sc.chain;
  ch.iterations = static_cast<int>(cfg.get_int("chain.iterations", ch.iterations));
  ch.burn_in = static_cast<int>(cfg.get_int("chain.burn_in", ch.burn_in));
  ch.chains = static_cast<int>(cfg.get_int("chain.chains", ch.chains));
  ch.seed = static_cast<std::uint64_t>(cfg.get_int("chain.seed", static_cast<long long>(ch.seed)));
  ch.mh_step_H = cfg.get_double("chain.step_H", ch.mh_step_H);
  ch.mh_step_K = cfg.get_double("chain.step_K", ch.mh_step_K);
  ch.adapt_during_burn_in = cfg.get_bool("chain.adapt_burn_in", ch.adapt_during_burn_in);

  auto& pr = sc.priors;
  auto vec = [](const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); };
  if (auto v = cfg.get_doubles("priors.alpha_mean")) {
    if (v->size() != 2) throw ConfigError("priors.alpha_mean needs 2 values");
    pr.alpha_mean = vec(*v);
  }
  if (cfg.has("priors.alpha_variance"))
    pr.alpha_cov = Eigen::MatrixXd::Identity(2, 2) * cfg.get_double("priors.alpha_variance", 1.0);
  if (auto v = cfg.get_doubles("priors.beta_mean")) {
    if (v->size() != 4) throw ConfigError("priors.beta_mean needs 4 values");
    pr.beta_mean = vec(*v);
  }
  if (cfg.has("priors.beta_variance"))
    pr.beta_cov = Eigen::MatrixXd::Identity(4, 4) * cfg.get_double("priors.beta_variance", 1.0);
  pr.sigma_shape = cfg.get_double("priors.sigma_shape", pr.sigma_shape);
  pr.sigma_rate = cfg.get_double("priors.sigma_rate", pr.sigma_rate);
  if (!(pr.alpha_cov(0, 0) > 0.0) || !(pr.beta_cov(0, 0) > 0.0)) throw ConfigError("prior variances must be positive");
  return sc;
}

inline int cmd_reconstruct(const ReconstructOptions& o, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  const auto cfg = config::Config::load(o.config, config::reconstruct_schema());
  std::string label = o.scenario.empty() ? cfg.get_string("model.scenario", "") : o.scenario;
  if (label.size() != 1) throw ConfigError("scenario must be one of A-H");
  auto sc = scenario_from_config(cfg, label[0]);
  if (o.seed) sc.chain.seed = *o.seed;
  if (o.chains) sc.chain.chains = *o.chains;
  if (o.iterations) sc.chain.iterations = *o.iterations;
  if (o.burn_in) sc.chain.burn_in = *o.burn_in;
  sc.validate();

  const auto cal = parse_window(cfg.get_string("windows.calibration", "1900-1998"));
  const auto pred = parse_window(cfg.get_string("windows.prediction", "1000-1899"));
  const auto proxy_path = cfg.get_path("data.proxy");
  const auto temp_path = cfg.get_path("data.temperature");
  if (!proxy_path || !temp_path) throw ConfigError("[data] needs proxy and temperature paths");
  const auto forcing_path = cfg.get_path("data.forcings");

  const auto proxy = csv::read_frame(*proxy_path, Role::Proxy);
  const auto temp = csv::read_frame(*temp_path, Role::Temperature);
  const auto pcol = cfg.get_string("data.proxy_column", detail::default_column(proxy, "", *proxy_path));
  const auto tcol = cfg.get_string("data.temperature_column", detail::default_column(temp, "", *temp_path));
  TimeSeriesFrame frame = proxy.merged(temp);

  std::optional<std::array<std::span<const double>, 3>> forcings;
  std::array<std::string, 3> fcols{cfg.get_string("data.solar_column", "S"), cfg.get_string("data.volcanic_column", "V"),
                                   cfg.get_string("data.ghg_column", "C")};
  if (sc.forcings_included) {
    if (!forcing_path) throw ConfigError("scenario " + label + " includes forcings but [data] forcings is not set");
    frame = frame.merged(csv::read_frame(*forcing_path, Role::Forcing));
  } else if (forcing_path) {
    err << "notice: scenario " << label << " excludes forcings; ignoring " << forcing_path->string() << "\n";
  }
  if (sc.forcings_included)
    forcings = std::array<std::span<const double>, 3>{frame.column(fcols[0]).values, frame.column(fcols[1]).values,
                                                      frame.column(fcols[2]).values};

  const auto data = hbm::build_model_data(frame.years(), frame.column(pcol).values, frame.column(tcol).values,
                                          forcings, cal, pred);
  const auto chains = hbm::run_chains(sc, data);

  const fs::path dir(o.out_dir);
  std::vector<const Eigen::MatrixXd*> params, latent, calib;
  for (const auto& c : chains) {
    params.push_back(&c.parameters);
    latent.push_back(&c.latent);
    calib.push_back(&c.calibration_predictive);
  }
  const int it = sc.chain.iterations, bi = sc.chain.burn_in;
  const auto& first = chains.front();
  csv::write_atomic(dir / "parameters.csv", csv::draws_to_csv(detail::draw_table(first.parameter_names, params, it, bi)));
  csv::write_atomic(dir / "latent.csv",
                    csv::draws_to_csv(detail::draw_table(detail::year_names(first.latent_years), latent, it, bi)));
  csv::write_atomic(dir / "calibration_predictive.csv",
                    csv::draws_to_csv(detail::draw_table(detail::year_names(first.calibration_years), calib, it, bi)));

  // per-year summary over pooled chains
  std::map<int, std::vector<double>> by_year;
  auto collect = [&](const std::vector<int>& years, const std::vector<const Eigen::MatrixXd*>& blocks) {
    for (std::size_t j = 0; j < years.size(); ++j)
      for (const auto* b : blocks)
        for (Eigen::Index r = 0; r < b->rows(); ++r) by_year[years[j]].push_back((*b)(r, static_cast<Eigen::Index>(j)));
  };
  collect(first.latent_years, latent);
  collect(first.calibration_years, calib);
  std::string summary = "year,mean,lower95,upper95\n";
  for (auto& [year, v] : by_year) {
    const auto iv = validation::central_interval(v, 0.95);
    summary += std::to_string(year) + "," + detail::fmt(stats::mean(v)) + "," + detail::fmt(iv.lower) + "," +
               detail::fmt(iv.upper) + "\n";
  }
  csv::write_atomic(dir / "summary.csv", summary);

  json psrf_json = nullptr;
  if (chains.size() >= 2) {
    const auto kept = static_cast<std::size_t>(first.parameters.rows());
    if (kept < 100) {
      err << "notice: fewer than 100 kept draws per chain; PSRF not computed\n";
    } else {
      std::string s = "parameter,psrf\n";
      psrf_json = json::object();
      std::vector<Eigen::MatrixXd> mats;
      std::vector<Eigen::Index> varying;
      for (Eigen::Index p = 0; p < first.parameters.cols(); ++p) {
        std::vector<std::vector<double>> per_chain;
        bool constant = true;
        for (const auto& c : chains) {
          per_chain.emplace_back(c.parameters.col(p).data(), c.parameters.col(p).data() + c.parameters.rows());
          constant = constant && (c.parameters.col(p).array() == c.parameters(0, p)).all() &&
                     c.parameters(0, p) == first.parameters(0, p);
        }
        if (constant) continue;  // fixed memory parameters in white scenarios
        varying.push_back(p);
        const double r = validation::psrf(per_chain);
        const auto& name = first.parameter_names[static_cast<std::size_t>(p)];
        s += name + "," + detail::fmt(r) + "\n";
        psrf_json[name] = r;
      }
      for (const auto& c : chains) mats.push_back(c.parameters(Eigen::all, varying));
      const double mv = validation::psrf_multivariate(mats);
      s += "multivariate," + detail::fmt(mv) + "\n";
      psrf_json["multivariate"] = mv;
      csv::write_atomic(dir / "psrf.csv", s);
    }
  }

  json rates = json::array();
  for (const auto& c : chains) {
    json r = json::object();
    for (const auto& [k, v] : c.acceptance_rates) {
      r[k] = v;
      if (v < 0.1 || v > 0.7)
        err << "warning: acceptance rate for " << k << " is " << detail::fmt(v) << ", outside [0.1, 0.7]\n";
    }
    rates.push_back(r);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json manifest{{"command", "reconstruct"},
                {"config", o.config},
                {"config_hash", detail::hex(detail::fnv1a(detail::read_file(o.config)))},
                {"seed", sc.chain.seed},
                {"chains", sc.chain.chains},
                {"iterations", sc.chain.iterations},
                {"burn_in", sc.chain.burn_in},
                {"scenario", label},
                {"acceptance_rates", rates},
                {"psrf", psrf_json},
                {"wall_time_s", wall},
                {"version", kVersion}};
  detail::append_line(dir / "manifests.jsonl", manifest.dump());
  out << "scenario " << label << ": " << chains.size() << " chain(s), " << first.parameters.rows()
      << " kept draws each, " << detail::fmt(wall) << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOptions {
  std::string draws;
  std::string observed;
  std::string column;
  std::string window;
  std::string out_dir;
};

inline int cmd_validate(const ValidateOptions& o, std::ostream& out) {
  const auto table = csv::read_draws(o.draws);
  const auto obs = csv::read_frame(o.observed, Role::Temperature);
  const auto col = detail::default_column(obs, o.column, o.observed);
  const std::optional<Window> w = o.window.empty() ? std::nullopt : std::optional(parse_window(o.window));

  std::vector<std::size_t> cols;
  std::vector<double> y;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    int year = 0;
    const auto& name = table.columns[c];
    if (std::from_chars(name.data(), name.data() + name.size(), year).ec != std::errc{})
      throw DataError(o.draws + ": column '" + name + "' is not a year");
    if (w && !w->contains(year)) continue;
    const auto i = obs.index_of(year);
    if (!i || is_missing(obs.column(col).values[*i])) continue;
    cols.push_back(c);
    y.push_back(obs.column(col).values[*i]);
  }
  if (y.empty()) throw DataError("no years shared by the draws and the observations");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t j = 0; j < cols.size(); ++j)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = table.rows[r][cols[j]];
  const auto rep = validation::validate(m, y);
  std::string s = "sq_bias,variance,rmse,ecp95,ecp80,is95,is80,crps\n";
  s += detail::fmt(rep.sq_bias) + "," + detail::fmt(rep.variance) + "," + detail::fmt(rep.rmse) + "," +
       detail::fmt(rep.ecp95) + "," + detail::fmt(rep.ecp80) + "," + detail::fmt(rep.is95) + "," +
       detail::fmt(rep.is80) + "," + detail::fmt(rep.crps) + "\n";
  csv::write_atomic(fs::path(o.out_dir) / "validation.csv", s);
  out << s;
  return 0;
}

// ---------------------------------------------------------------------------
// tcr

struct TcrOptions {
  std::vector<std::string> draws;    // LABEL=parameters.csv
  std::vector<std::string> weights;  // LABEL=w
  std::string forcings;
  std::string ghg_column = "C";
  std::string window;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  std::string out_dir;
};

inline int cmd_tcr(const TcrOptions& o, std::ostream& out) {
  const auto files = detail::parse_pairs(o.draws, "--draws");
  if (files.empty()) throw ConfigError("--draws is required");
  std::map<std::string, std::vector<double>> beta3;
  for (const auto& [label, path] : files) {
    const auto t = csv::read_draws(path);
    beta3[label] = t.column_values(t.index_of("beta3"));
  }
  std::map<std::string, double> weights;
  if (o.weights.empty()) {
    for (const auto& [label, v] : beta3) weights[label] = 1.0 / static_cast<double>(beta3.size());
  } else {
    for (const auto& [label, v] : detail::parse_pairs(o.weights, "--weight")) {
      try {
        weights[label] = std::stod(v);
      } catch (const std::exception&) {
        throw ConfigError("bad weight '" + v + "' for " + label);
      }
    }
  }
  auto f = csv::read_frame(o.forcings, Role::Forcing);
  if (!o.window.empty()) f = f.slice(parse_window(o.window));
  const auto c = detail::present_values(f, o.ghg_column);
  const auto tf = hbm::transform_forcings(std::vector<double>(c.size(), 0.0), c);

  std::mt19937_64 rng(o.seed);
  const auto d = validation::tcr_density(beta3, weights, tf.ghg, rng, o.samples);
  std::string s = "iteration,tcr\n";
  for (std::size_t i = 0; i < d.draws.size(); ++i) s += std::to_string(i + 1) + "," + detail::fmt(d.draws[i]) + "\n";
  const fs::path dir(o.out_dir);
  csv::write_atomic(dir / "tcr_draws.csv", s);
  json mix = json::object();
  for (const auto& [label, w] : d.scenario_mix) mix[label] = w;
  json j{{"median", d.median}, {"lower95", d.lower95}, {"upper95", d.upper95}, {"draws", d.draws.size()},
         {"sd_log_c", stats::stddev(tf.ghg)}, {"scenario_mix", mix}};
  csv::write_atomic(dir / "tcr_summary.json", j.dump(2) + "\n");
  out << "TCR median " << detail::fmt(d.median) << " [" << detail::fmt(d.lower95) << ", " << detail::fmt(d.upper95)
      << "]\n";
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Long-memory Bayesian temperature reconstruction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "generate pseudoproxy data with known parameters");
  synth->add_option("--out-dir", so.out_dir)->required();
  synth->add_option("--seed", so.seed);
  synth->add_option("--years", so.years, "record span FIRST-LAST");
  synth->add_option("--calibration", so.calibration, "instrumental window FIRST-LAST");
  synth->add_option("--proxy-noise", so.proxy_noise, "white | ar1:PHI | fgn:H");
  synth->add_option("--process-noise", so.process_noise, "white | ar1:PHI | fgn:H");
  synth->add_flag("--no-forcings", so.no_forcings);
  synth->add_option("--panel", so.panel, "number of noisy proxy copies");
  synth->add_option("--panel-noise", so.panel_noise);
  synth->add_option("--alpha", so.alpha)->expected(2)->delimiter(',');
  synth->add_option("--beta", so.beta)->expected(4)->delimiter(',');
  synth->add_option("--sigma-p", so.sigma_p);
  synth->add_option("--sigma-t", so.sigma_t);

  ReduceOptions ro;
  auto* reduce = app.add_subcommand("reduce", "collapse a proxy panel into a reduced proxy");
  reduce->add_option("--proxies", ro.proxies)->required();
  reduce->add_option("--temperature", ro.temperature)->required();
  reduce->add_option("--temperature-column", ro.temperature_column);
  reduce->add_option("--fit-window", ro.fit_window, "OLS window (default 1900-1982)");
  reduce->add_option("--standardize-window", ro.standardize_window, "default: full record");
  reduce->add_option("--transform", ro.transforms, "NAME=identity|log|log1m");
  reduce->add_option("--columns", ro.columns)->delimiter(',');
  reduce->add_option("--exclude", ro.exclude)->delimiter(',');
  reduce->add_option("--local-series", ro.references_file, "CSV of local reference series for screening");
  reduce->add_option("--reference", ro.references, "PROXY=LOCAL_COLUMN");
  reduce->add_option("--level", ro.level);
  reduce->add_option("--out-dir", ro.out_dir)->required();

  auto add_series = [](CLI::App* c, SeriesOptions& s) {
    c->add_option("--input", s.input)->required();
    c->add_option("--column", s.column);
    c->add_option("--window", s.window);
    c->add_option("--out-dir", s.out_dir)->required();
  };
  SpectrumOptions spo;
  auto* spectrum = app.add_subcommand("spectrum", "spectral estimate and log-log slope");
  add_series(spectrum, spo.series);
  spectrum->add_option("--method", spo.method, "periodogram | multitaper");
  spectrum->add_option("--tapers", spo.tapers);
  spectrum->add_option("--fraction", spo.fraction, "fraction of low frequencies used for the slope");

  MemtestOptions mo;
  auto* mem = app.add_subcommand("memtest", "tests for long memory");
  add_series(mem, mo.series);
  mem->add_option("--tests", mo.tests)->delimiter(',');
  mem->add_option("--null", mo.null_model, "null family for Beran's test: white | ar1 | fgn");
  mem->add_option("--bandwidth", mo.bandwidth);

  ReconstructOptions rco;
  auto* rec = app.add_subcommand("reconstruct", "sample the hierarchical model");
  rec->add_option("--scenario", rco.scenario, "A-H");
  rec->add_option("--config", rco.config)->required();
  rec->add_option("--seed", rco.seed);
  rec->add_option("--chains", rco.chains);
  rec->add_option("--iterations", rco.iterations);
  rec->add_option("--burn-in", rco.burn_in);
  rec->add_option("--out-dir", rco.out_dir)->required();

  ValidateOptions vo;
  auto* val = app.add_subcommand("validate", "score draws against observations");
  val->add_option("--draws", vo.draws)->required();
  val->add_option("--observed", vo.observed)->required();
  val->add_option("--column", vo.column);
  val->add_option("--window", vo.window);
  val->add_option("--out-dir", vo.out_dir)->required();

  TcrOptions to;
  auto* tcr = app.add_subcommand("tcr", "transient climate response from beta3 draws");
  tcr->add_option("--draws", to.draws, "LABEL=parameters.csv")->required();
  tcr->add_option("--weight", to.weights, "LABEL=WEIGHT");
  tcr->add_option("--forcings", to.forcings)->required();
  tcr->add_option("--ghg-column", to.ghg_column);
  tcr->add_option("--window", to.window);
  tcr->add_option("--samples", to.samples);
  tcr->add_option("--seed", to.seed);
  tcr->add_option("--out-dir", to.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(so, out);
    if (*reduce) return cmd_reduce(ro, out);
    if (*spectrum) return cmd_spectrum(spo, out);
    if (*mem) return cmd_memtest(mo, out);
    if (*rec) return cmd_reconstruct(rco, out, err);
    if (*val) return cmd_validate(vo, out);
    if (*tcr) return cmd_tcr(to, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace lmr::cli
