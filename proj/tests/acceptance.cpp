// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is nonzero when any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "lmrecon/cli.hpp"
#include "lmrecon/hbm_sampler.hpp"
#include "lmrecon/memory_tests.hpp"
#include "lmrecon/noise_models.hpp"
#include "lmrecon/stats.hpp"
#include "lmrecon/synthetic.hpp"
#include "lmrecon/validation.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace lmr;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> white(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::vector<double> x(n);
  for (double& v : x) v = z(rng);
  return x;
}

// 1 -------------------------------------------------------------------------
void fgn_exactness(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (double H : {0.55, 0.7, 0.9}) {
    const auto g = acvf(NoiseModel::fgn(H), 63);
    for (int n = 1; n <= 64; ++n) {
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s += g[static_cast<std::size_t>(std::abs(i - j))];
      worst = std::max(worst, std::abs(s - std::pow(n, 2.0 * H)));
    }
  }
  o.require(worst <= 1e-9, "partial-sum identity");

  // mean-known lag-k estimator is unbiased; 3 SE from the spread across paths
  int misses = 0;
  double worst_z = 0.0;
  std::mt19937_64 rng(101);
  for (double H : {0.55, 0.7, 0.9}) {
    const std::size_t n = 512, paths = 200;
    std::vector<std::vector<double>> est(6);
    for (std::size_t p = 0; p < paths; ++p) {
      const auto x = sample_fgn(H, n, rng);
      for (std::size_t k = 0; k <= 5; ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) s += x[t] * x[t + k];
        est[k].push_back(s / static_cast<double>(n - k));
      }
    }
    for (std::size_t k = 0; k <= 5; ++k) {
      const double se = stats::stddev(est[k]) / std::sqrt(static_cast<double>(paths));
      const double z = std::abs(stats::mean(est[k]) - oracle::fgn_gamma(H, static_cast<double>(k))) / se;
      worst_z = std::max(worst_z, z);
      if (z > 3.0) ++misses;
    }
  }
  const double secs = seconds_since(t0);
  o.require(misses == 0, "sample autocovariance within 3 SE");
  o.require(secs < 30.0, "runtime < 30 s");
  o.detail << "max |identity error| " << worst << ", max |z| " << worst_z << " over 18 lags, " << secs << " s";
}

// 2 -------------------------------------------------------------------------
void likelihood_oracle(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> len(1, 256);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = len(rng);
    NoiseModel m;
    switch (rep % 3) {
      case 0: m = NoiseModel::white(0.2 + 2.0 * u(rng)); break;
      case 1: m = NoiseModel::ar1(-0.95 + 1.9 * u(rng), 0.2 + 2.0 * u(rng)); break;
      default: m = NoiseModel::fgn(0.02 + 0.96 * u(rng), 0.2 + 2.0 * u(rng)); break;
    }
    const auto g = acvf(m, static_cast<std::size_t>(n - 1));
    VectorXd x(n);
    for (auto& v : x) v = m.scale * z(rng);
    const double a = loglik_durbin_levinson(std::vector<double>(x.begin(), x.end()), g);
    const double b = oracle::gaussian_logpdf(x, oracle::toeplitz(g.values, n));
    worst = std::max(worst, std::abs(a - b));
  }
  const double secs = seconds_since(t0);
  o.require(worst <= 1e-8, "dense agreement");
  o.require(secs < 30.0, "runtime < 30 s");
  o.detail << "max |difference| " << worst << " over 100 cases, " << secs << " s";
}

// 3 -------------------------------------------------------------------------
void test_calibration(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(303);
  int rob = 0, dh = 0;
  for (int r = 0; r < 200; ++r) {
    const auto x = white(2048, rng);
    if (memtest::robinson_test(x).p_value < 0.05) ++rob;
    if (memtest::davies_harte_test(x).p_value < 0.05) ++dh;
  }
  int power = 0;
  for (int r = 0; r < 100; ++r)
    if (memtest::robinson_test(sample_fgn(0.8, 1000, rng)).p_value < 0.05) ++power;
  const double secs = seconds_since(t0);
  const double rr = rob / 200.0, dr = dh / 200.0;
  o.require(rr >= 0.02 && rr <= 0.10, "Robinson size");
  o.require(dr >= 0.02 && dr <= 0.10, "Davies-Harte size");
  o.require(power >= 80, "Robinson power");
  o.require(secs < 300.0, "runtime < 5 min");
  o.detail << "size Robinson " << 100 * rr << "%, Davies-Harte " << 100 * dr << "%; power " << power << "/100, "
           << secs << " s";
}

// 4 -------------------------------------------------------------------------
void estimator_accuracy(Outcome& o) {
  std::mt19937_64 rng(404);
  for (double H : {0.6, 0.75, 0.9}) {
    std::vector<double> est;
    for (int r = 0; r < 100; ++r) {
      const auto x = sample_fgn(H, 2000, rng);
      est.push_back(memtest::local_whittle(x, memtest::default_bandwidth(x.size())));
    }
    const double med = stats::median(est);
    o.require(std::abs(med - H) <= 0.08, "median near " + std::to_string(H));
    o.detail << "H=" << H << " median " << med << "; ";
  }
  double worst = 0.0;
  for (int r = 0; r < 10; ++r) {
    auto x = sample_fgn(0.7, 1000, rng);
    const int m = memtest::default_bandwidth(x.size());
    const double a = memtest::local_whittle(x, m);
    for (double& v : x) v *= 37.5;
    worst = std::max(worst, std::abs(a - memtest::local_whittle(x, m)));
  }
  o.require(worst <= 1e-12, "scale invariance");
  o.detail << "max scale change " << worst;
}

// 5 -------------------------------------------------------------------------
void conditional_correctness(Outcome& o) {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> z;
  const int n = 5;
  hbm::ModelData d;
  d.proxy.resize(n);
  d.temperature = VectorXd::Constant(n, kMissing);
  d.design.resize(n, 4);
  for (int i = 0; i < n; ++i) {
    d.years.push_back(1 + i);
    d.design.row(i) << 1.0, z(rng), -std::abs(z(rng)), 5.6 + 0.05 * i;
    d.proxy(i) = z(rng);
    if (i < 2) {
      d.latent.push_back(i);
    } else {
      d.temperature(i) = z(rng);
      d.observed.push_back(i);
    }
  }
  hbm::ModelState s;
  s.alpha << 0.1, 0.7;
  s.beta = (VectorXd(4) << -0.3, 0.2, -0.3, 0.8).finished();
  s.sigma_P2 = 0.2;
  s.sigma_T2 = 0.15;
  s.T_u = (VectorXd(2) << 0.4, -0.2).finished();
  const hbm::Priors pr;
  const MatrixXd I = MatrixXd::Identity(n, n);
  const VectorXd T = s.full_temperature(d);
  double worst = 0.0;
  const auto track = [&](double v) { worst = std::max(worst, v); };

  MatrixXd Z(n, 2);
  Z << VectorXd::Ones(n), T;
  const auto ga = hbm::regression_conditional(Z, d.proxy, I, s.sigma_P2, pr.alpha_mean, pr.alpha_cov);
  const auto oa = oracle::regression_posterior(Z, d.proxy, s.sigma_P2 * I, pr.alpha_mean, pr.alpha_cov);
  track((ga.mean - oa.mean).cwiseAbs().maxCoeff());
  track((ga.covariance() - oa.cov).cwiseAbs().maxCoeff());

  const auto gb = hbm::regression_conditional(d.design, T, I, s.sigma_T2, pr.beta_mean, pr.beta_cov);
  const auto ob = oracle::regression_posterior(d.design, T, s.sigma_T2 * I, pr.beta_mean, pr.beta_cov);
  track((gb.mean - ob.mean).cwiseAbs().maxCoeff());
  track((gb.covariance() - ob.cov).cwiseAbs().maxCoeff());

  // conjugate algebra: IG(a + n/2, b + sum r^2 / 2), and the density matches
  // prior x likelihood up to a constant
  const VectorXd rP = d.proxy - (s.alpha(0) + s.alpha(1) * T.array()).matrix();
  const VectorXd rT = T - d.design * s.beta;
  for (const VectorXd* r : {&rP, &rT}) {
    const auto ig = hbm::variance_conditional(*r, I, pr.sigma_shape, pr.sigma_rate);
    double ss = 0.0;
    for (Index i = 0; i < n; ++i) ss += (*r)(i) * (*r)(i);
    track(std::abs(ig.shape - (pr.sigma_shape + n / 2.0)));
    track(std::abs(ig.rate - (pr.sigma_rate + ss / 2.0)));
    const auto gap = [&](double v) {
      return oracle::variance_log_posterior(v, *r, I, pr.sigma_shape, pr.sigma_rate) -
             oracle::inverse_gamma_logpdf(v, ig.shape, ig.rate);
    };
    for (double v : {0.02, 0.3, 1.7}) track(std::abs(gap(v) - gap(0.5)));
  }

  const auto gt = hbm::latent_conditional(d, s, I, I);
  const auto ot = oracle::temperature_posterior(d.design, s.beta, s.alpha(0), s.alpha(1), s.sigma_P2, s.sigma_T2, I, I,
                                                d.proxy, d.latent, d.observed, d.temperature(d.observed));
  track((gt.mean - ot.mean).cwiseAbs().maxCoeff());
  track((gt.covariance() - ot.cov).cwiseAbs().maxCoeff());

  o.require(worst <= 1e-8, "oracle agreement");
  o.detail << "max |difference| " << worst << " across alpha, beta, sigma_P2, sigma_T2, T_u";
}

// 6 -------------------------------------------------------------------------
void posterior_recovery(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const int reps = 20;
  const std::vector<std::string> names{"alpha1", "beta2", "beta3", "H", "K"};
  const std::vector<Index> cols{1, 4, 5, 8, 9};
  std::vector<int> covered(names.size(), 0);
  int h_above = 0, k_above = 0;
  double rate_lo = 1.0, rate_hi = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    synthetic::SyntheticSpec spec;
    spec.years = Window{1, 600};
    spec.seed = 6000 + static_cast<std::uint64_t>(rep);
    const auto syn = synthetic::generate(spec);
    const auto& f = syn.frame;
    const Window cal{301, 600}, pred{1, 300};
    std::vector<double> t = f.column("temperature").values;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (!cal.contains(f.years()[i])) t[i] = kMissing;
    const auto data = hbm::build_model_data(
        f.years(), f.column("rp").values, t,
        std::array<std::span<const double>, 3>{f.column("S").values, f.column("V").values, f.column("C").values},
        cal, pred);
    hbm::ChainSettings ch;
    ch.iterations = 5000;
    ch.burn_in = 1000;
    ch.seed = 60 + static_cast<std::uint64_t>(rep);
    const auto out = hbm::run_chain(hbm::ScenarioConfig::for_label('A', ch), data);
    for (const auto& [k, v] : out.acceptance_rates) {
      rate_lo = std::min(rate_lo, v);
      rate_hi = std::max(rate_hi, v);
    }

    const auto& tr = spec.truth;
    const std::vector<double> truth{tr.alpha1, tr.beta[2], tr.beta[3], tr.H, tr.K};
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const auto c = out.parameters.col(cols[p]);
      std::vector<double> v(c.data(), c.data() + c.size());
      std::sort(v.begin(), v.end());
      const double lo = stats::quantile_sorted(v, 0.025), hi = stats::quantile_sorted(v, 0.975);
      if (truth[p] >= lo && truth[p] <= hi) ++covered[p];
      if (names[p] == "H" && lo > 0.5) ++h_above;
      if (names[p] == "K" && lo > 0.5) ++k_above;
    }
    std::cerr << "  replicate " << rep + 1 << "/" << reps << " done (" << seconds_since(t0) << " s)\n";
  }
  const double secs = seconds_since(t0);
  o.require(h_above == reps && k_above == reps, "2.5% quantiles of H and K above 0.5");
  for (std::size_t p = 0; p < names.size(); ++p) {
    o.require(covered[p] >= 16, "coverage of " + names[p]);
    o.detail << names[p] << " " << covered[p] << "/" << reps << "; ";
  }
  o.require(secs <= 3600.0, "runtime <= 1 hour");
  o.detail << "q2.5(H)>0.5 in " << h_above << "/" << reps << ", q2.5(K)>0.5 in " << k_above << "/" << reps
           << "; MH acceptance " << rate_lo << "-" << rate_hi << "; " << secs << " s";
}

// 7 -------------------------------------------------------------------------
void diagnostics(Outcome& o) {
  std::mt19937_64 rng(707);
  std::vector<std::vector<double>> chains(5);
  for (auto& c : chains) c = white(4000, rng);
  const double iid = validation::psrf(chains);
  std::vector<MatrixXd> mats;
  for (const auto& c : chains) mats.push_back(Eigen::Map<const VectorXd>(c.data(), 4000));
  const double iid_mv = validation::psrf_multivariate(mats);
  for (std::size_t k = 0; k < chains.size(); ++k)
    for (double& v : chains[k]) v += static_cast<double>(k);
  const double shifted = validation::psrf(chains);
  o.require(iid >= 0.99 && iid <= 1.05, "iid PSRF in [0.99, 1.05]");
  o.require(iid_mv >= 0.99 && iid_mv <= 1.05, "iid multivariate PSRF in [0.99, 1.05]");
  o.require(shifted > 1.2, "shifted PSRF > 1.2");
  o.detail << "iid " << iid << " (multivariate " << iid_mv << "), shifted " << shifted;
}

// 8 -------------------------------------------------------------------------
void scoring_rules(Outcome& o) {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> len(2, 200);
  double worst = 0.0;
  for (int rep = 0; rep < 500; ++rep) {
    const int n = len(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = 2.0 * z(rng) + 0.5;
      b[i] = z(rng);
    }
    const auto m = validation::point_metrics(a, b);
    worst = std::max(worst, std::abs(m.rmse * m.rmse - (m.sq_bias + m.variance)));
  }
  o.require(worst <= 1e-9, "rmse identity");

  bool exact = true;
  for (auto [x, y] : {std::pair{1.25, -0.5}, std::pair{0.0, 3.0}, std::pair{-2.0, -2.0}})
    exact = exact && validation::crps_sample(std::vector<double>(25, x), y) == std::abs(x - y);
  o.require(exact, "point-mass CRPS");

  std::vector<double> g(100000);
  for (double& v : g) v = z(rng);
  const double crps_err = std::abs(validation::crps_sample(g, 0.0) - oracle::gaussian_crps_at_zero());
  o.require(crps_err <= 1e-2, "Gaussian CRPS");

  const int reps = 200, years = 99;
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    MatrixXd d(1000, years);
    for (Index i = 0; i < d.size(); ++i) d.data()[i] = z(rng);
    std::vector<double> y(years);
    for (double& v : y) v = z(rng);
    total += validation::ecp(d, y, 0.95);
  }
  const double mean_ecp = total / reps;
  const double se = 100.0 * std::sqrt(0.95 * 0.05 / (reps * years));
  o.require(std::abs(mean_ecp - 95.0) <= 3.0 * se, "ECP calibration");
  o.detail << "identity error " << worst << "; Gaussian CRPS error " << crps_err << "; mean ECP95 " << mean_ecp
           << " (3 SE = " << 3.0 * se << ")";
}

// 9 -------------------------------------------------------------------------
void tcr_transform(Outcome& o) {
  std::mt19937_64 rng(909);
  std::normal_distribution<double> z;
  std::vector<double> log_c;
  for (int i = 0; i < 200; ++i) log_c.push_back(std::log(280.0) + 0.4 * std::pow(i / 199.0, 4.0));
  const double sd = stats::stddev(log_c);

  const auto single = validation::tcr_density({{"A", {0.8}}}, {{"A", 1.0}}, log_c, rng);
  o.require(single.draws.size() == 1 && single.draws[0] == 0.8 * std::numbers::ln2 / sd, "single draw");

  // bitwise exact for power-of-two factors; other factors round once on each side
  std::vector<double> b(1000);
  for (double& v : b) v = 0.8 + 0.1 * z(rng);
  const auto t = validation::tcr_transform(b, log_c);
  bool exact = true;
  double worst_ulps = 0.0;
  for (double c : {2.0, 0.25, 8.0, 3.0, 0.7}) {
    std::vector<double> cb(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) cb[i] = c * b[i];
    const auto ct = validation::tcr_transform(cb, log_c);
    const bool pow2 = std::ilogb(c) == std::log2(c);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (pow2) exact = exact && ct[i] == c * t[i];
      const double ulp = std::nextafter(std::abs(ct[i]), INFINITY) - std::abs(ct[i]);
      worst_ulps = std::max(worst_ulps, std::abs(ct[i] - c * t[i]) / ulp);
    }
  }
  o.require(exact, "homogeneity exact for power-of-two factors");
  o.require(worst_ulps <= 4.0, "homogeneity within 4 ulp");

  const int n = 100000;
  std::vector<double> a(n), bb(n);
  for (double& v : a) v = 0.7 + 0.05 * z(rng);
  for (double& v : bb) v = 0.9 + 0.08 * z(rng);
  const auto mix = validation::tcr_density({{"A", a}, {"B", bb}}, {{"A", 0.5}, {"B", 0.5}}, log_c, rng);
  auto pooled = validation::tcr_transform(a, log_c);
  const auto tb = validation::tcr_transform(bb, log_c);
  pooled.insert(pooled.end(), tb.begin(), tb.end());
  const double ks = stats::ks_distance(mix.draws, pooled);
  o.require(ks < 0.01, "mixture KS distance");
  o.detail << "single draw " << single.draws[0] << "; homogeneity max " << worst_ulps << " ulp; KS " << ks << " at " << mix.draws.size() << " draws";
}

// 10 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "lmrecon");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

void reproducibility(Outcome& o) {
  const fs::path root = fs::temp_directory_path() / "lmrecon_acceptance_repro";
  fs::remove_all(root);
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    ok = ok && run_cli({"synth", "--out-dir", (d / "data").string(), "--years", "1-300", "--calibration", "151-300",
                        "--seed", "42"}) == 0;
    ok = ok && run_cli({"reconstruct", "--scenario", "A", "--config", (d / "data" / "reconstruct.cfg").string(),
                        "--iterations", "400", "--burn-in", "100", "--chains", "2", "--seed", "7", "--out-dir",
                        (d / "run").string()}) == 0;
    ok = ok && run_cli({"validate", "--draws", (d / "run" / "calibration_predictive.csv").string(), "--observed",
                        (d / "data" / "temperature.csv").string(), "--out-dir", (d / "val").string()}) == 0;
  }
  o.require(ok, "pipeline exit codes");
  int compared = 0, differ = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifests.jsonl") continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    ++compared;
    if (slurp(entry.path()) != slurp(root / "b" / rel)) {
      ++differ;
      o.detail << "differs: " << rel.string() << "; ";
    }
  }
  o.require(compared >= 10 && differ == 0, "byte-identical outputs");
  o.detail << compared << " files compared, " << differ << " differ";
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"fGn exactness", fgn_exactness},
      {"likelihood oracle", likelihood_oracle},
      {"test calibration", test_calibration},
      {"estimator accuracy", estimator_accuracy},
      {"conditional correctness", conditional_correctness},
      {"posterior recovery", posterior_recovery},
      {"diagnostics", diagnostics},
      {"scoring rules", scoring_rules},
      {"TCR transform", tcr_transform},
      {"reproducibility", reproducibility},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " exception: " << e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail.str() << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
