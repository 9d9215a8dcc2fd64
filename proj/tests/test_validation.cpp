#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "lmrecon/stats.hpp"
#include "lmrecon/validation.hpp"
#include "oracles.hpp"

using namespace lmr;
using namespace lmr::validation;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian_draws(int rows, int cols, std::mt19937_64& rng, double mu = 0.0, double sd = 1.0) {
  std::normal_distribution<double> z(mu, sd);
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = z(rng);
  return m;
}

double brute_crps(const std::vector<double>& x, double y) {
  double a = 0.0, b = 0.0;
  for (double u : x) {
    a += std::abs(u - y);
    for (double v : x) b += std::abs(u - v);
  }
  const double m = static_cast<double>(x.size());
  return a / m - 0.5 * b / (m * m);
}

}  // namespace

TEST(PointMetrics, Examples) {
  const std::vector<double> obs{0.1, -0.4, 0.7, 1.2};
  const auto same = point_metrics(obs, obs);
  EXPECT_DOUBLE_EQ(same.sq_bias, 0.0);
  EXPECT_DOUBLE_EQ(same.variance, 0.0);
  EXPECT_DOUBLE_EQ(same.rmse, 0.0);

  std::vector<double> shifted = obs;
  for (double& v : shifted) v -= 0.3;
  const auto off = point_metrics(shifted, obs);
  EXPECT_NEAR(off.sq_bias, 0.09, 1e-15);
  EXPECT_NEAR(off.variance, 0.0, 1e-15);
  EXPECT_NEAR(off.rmse, 0.3, 1e-15);

  const auto pm = point_metrics(std::vector<double>{1.0, -1.0}, std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(pm.sq_bias, 0.0);
  EXPECT_DOUBLE_EQ(pm.variance, 2.0);
  EXPECT_DOUBLE_EQ(pm.rmse, std::sqrt(2.0));
}

TEST(PointMetrics, Errors) {
  EXPECT_THROW(point_metrics(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0}), ShapeError);
}

TEST(PointMetrics, RmseIdentityOnRandomInputs) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> len(2, 300);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = len(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = 3.0 * z(rng) + 1.0;
      b[i] = z(rng);
    }
    const auto m = point_metrics(a, b);
    EXPECT_NEAR(m.rmse * m.rmse, m.sq_bias + m.variance, 1e-9);
    EXPECT_GE(m.sq_bias, 0.0);
    EXPECT_GE(m.variance, 0.0);
  }
}

TEST(Ecp, ObservationAtMedianIsFullyCovered) {
  std::mt19937_64 rng(2);
  const MatrixXd d = gaussian_draws(200, 30, rng);
  std::vector<double> med(30);
  for (int j = 0; j < 30; ++j) {
    std::vector<double> c(d.col(j).data(), d.col(j).data() + d.rows());
    med[j] = stats::median(c);
  }
  EXPECT_DOUBLE_EQ(ecp(d, med, 0.95), 100.0);
  EXPECT_DOUBLE_EQ(ecp(d, med, 0.10), 100.0);
}

TEST(Ecp, CalibratedUnderCorrectPredictive) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  const int reps = 200, years = 99;
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    const MatrixXd d = gaussian_draws(1000, years, rng);
    std::vector<double> y(years);
    for (double& v : y) v = z(rng);
    total += ecp(d, y, 0.95);
  }
  const double se = 100.0 * std::sqrt(0.95 * 0.05 / (reps * years));
  EXPECT_NEAR(total / reps, 95.0, 3.0 * se);
}

TEST(Ecp, PermutationInvariant) {
  std::mt19937_64 rng(4);
  const MatrixXd d = gaussian_draws(100, 12, rng);
  std::vector<double> y(12);
  std::normal_distribution<double> z(0.0, 1.5);
  for (double& v : y) v = z(rng);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  MatrixXd dp(100, 12);
  std::vector<double> yp(12);
  for (int j = 0; j < 12; ++j) {
    dp.col(j) = d.col(perm[j]);
    yp[j] = y[perm[j]];
  }
  EXPECT_DOUBLE_EQ(ecp(d, y, 0.8), ecp(dp, yp, 0.8));
}

TEST(Ecp, Errors) {
  std::mt19937_64 rng(5);
  const MatrixXd few = gaussian_draws(39, 3, rng);
  EXPECT_THROW(ecp(few, std::vector<double>(3, 0.0), 0.95), InsufficientSampleError);
  const MatrixXd ok = gaussian_draws(40, 3, rng);
  EXPECT_NO_THROW(ecp(ok, std::vector<double>(3, 0.0), 0.95));
  EXPECT_THROW(ecp(ok, std::vector<double>(2, 0.0), 0.95), ShapeError);
  EXPECT_THROW(ecp(ok, std::vector<double>(3, 0.0), 1.0), ParameterDomainError);
}

TEST(IntervalScore, Examples) {
  const Interval iv{-1.0, 2.0};
  EXPECT_DOUBLE_EQ(interval_score_one(iv, 0.5, 0.95), 3.0);
  EXPECT_NEAR(interval_score_one(iv, 2.0 + 0.4, 0.8), 3.0 + 10.0 * 0.4, 1e-12);
  EXPECT_NEAR(interval_score_one(iv, -1.5, 0.95), 3.0 + 40.0 * 0.5, 1e-12);
}

TEST(IntervalScore, GaussianAtMedianIsTheIntervalWidth) {
  // N(0,1) draws on an exact quantile grid; at y = 0 the score is 2 z_{0.975}
  const int m = 20001;
  MatrixXd d(m, 1);
  boost::math::normal_distribution<double> nd;
  for (int i = 0; i < m; ++i) d(i, 0) = boost::math::quantile(nd, (i + 0.5) / m);
  const double width = 2.0 * 1.959963984540054;
  EXPECT_NEAR(interval_score(d, std::vector<double>{0.0}, 0.95), width, 2e-3);
}

TEST(IntervalScore, AtLeastTheWidth) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> draws(50);
    for (double& v : draws) v = z(rng) / 2.0;
    const auto iv = central_interval(draws, 0.8);
    const double y = z(rng);
    const double s = interval_score_one(iv, y, 0.8);
    const bool inside = y >= iv.lower && y <= iv.upper;
    if (inside) {
      EXPECT_DOUBLE_EQ(s, iv.upper - iv.lower);
    } else {
      EXPECT_GT(s, iv.upper - iv.lower);
    }
  }
}

TEST(Crps, PointMassAndDegenerateCases) {
  EXPECT_DOUBLE_EQ(crps_sample(std::vector<double>(10, 1.5), 1.5), 0.0);
  EXPECT_DOUBLE_EQ(crps_sample(std::vector<double>(10, 1.5), -0.25), 1.75);
  EXPECT_DOUBLE_EQ(crps_sample(std::vector<double>{0.0, 1.0}, 0.0), 0.25);
  EXPECT_THROW(crps_sample(std::vector<double>{1.0}, 0.0), InsufficientSampleError);
}

TEST(Crps, SortedIdentityMatchesPairwiseSum) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(2 + rep * 3);
    for (double& v : x) v = z(rng);
    const double y = z(rng);
    EXPECT_NEAR(crps_sample(x, y), brute_crps(x, y), 1e-12);
    EXPECT_GE(crps_sample(x, y), 0.0);
  }
}

TEST(Crps, GaussianClosedForm) {
  EXPECT_NEAR(crps_gaussian(0.0, 1.0, 0.0), oracle::gaussian_crps_at_zero(), 1e-15);
  EXPECT_NEAR(oracle::gaussian_crps_at_zero(), 0.233695, 1e-6);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  std::vector<double> x(100000);
  for (double& v : x) v = z(rng);
  EXPECT_NEAR(crps_sample(x, 0.0), oracle::gaussian_crps_at_zero(), 1e-2);
  EXPECT_NEAR(crps_sample(x, 1.3), crps_gaussian(0.0, 1.0, 1.3), 1e-2);
}

TEST(Validate, ReportIsConsistent) {
  std::mt19937_64 rng(9);
  const MatrixXd d = gaussian_draws(400, 50, rng);
  std::vector<double> y(50);
  std::normal_distribution<double> z;
  for (double& v : y) v = z(rng);
  const auto r = validate(d, y);
  EXPECT_NEAR(r.rmse * r.rmse, r.sq_bias + r.variance, 1e-9);
  EXPECT_GE(r.ecp95, r.ecp80);
  EXPECT_GT(r.is80, 0.0);
  EXPECT_GT(r.crps, 0.0);
  EXPECT_DOUBLE_EQ(r.ecp95, ecp(d, y, 0.95));
  EXPECT_DOUBLE_EQ(r.crps, crps(d, y));
}

TEST(Psrf, IdenticalChains) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z;
  std::vector<double> c(500);
  for (double& v : c) v = z(rng);
  EXPECT_LE(psrf({c, c, c}), 1.0 + 1e-9);
}

TEST(Psrf, IidChainsNearOne) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> chains(2, std::vector<double>(4000));
  for (auto& c : chains)
    for (double& v : c) v = z(rng);
  const double r = psrf(chains);
  EXPECT_GE(r, 0.99);
  EXPECT_LE(r, 1.05);
}

TEST(Psrf, MatchesHandFormula) {
  const std::vector<std::vector<double>> chains = [] {
    std::vector<std::vector<double>> c(3, std::vector<double>(100));
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 100; ++i) c[k][i] = std::sin(0.37 * i + k) + 0.1 * k;
    return c;
  }();
  double w = 0.0;
  std::vector<double> means;
  for (const auto& c : chains) {
    means.push_back(stats::mean(c));
    w += stats::variance(c) / 3.0;
  }
  const double b_over_n = stats::variance(means);
  const double expect = std::sqrt((99.0 / 100.0 * w + (4.0 / 3.0) * b_over_n) / w);
  EXPECT_NEAR(psrf(chains), expect, 1e-12);
}

TEST(Psrf, ShiftedChainsAreFlagged) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
  for (std::size_t k = 0; k < chains.size(); ++k)
    for (double& v : chains[k]) v = z(rng) + 1.5 * static_cast<double>(k);
  EXPECT_GT(psrf(chains), 1.2);
}

TEST(Psrf, Errors) {
  EXPECT_THROW(psrf({std::vector<double>(200, 0.0)}), ConfigError);
  EXPECT_THROW(psrf({std::vector<double>(50, 0.0), std::vector<double>(50, 1.0)}), InsufficientSampleError);
  EXPECT_THROW(psrf_multivariate({MatrixXd::Zero(200, 2)}), ConfigError);
}

TEST(PsrfMultivariate, ReducesToUnivariateBound) {
  // with p = 1 the Brooks-Gelman form is sqrt((n-1)/n + (m+1)/m B/(nW))
  std::mt19937_64 rng(13);
  std::vector<MatrixXd> one;
  std::vector<std::vector<double>> flat;
  for (int k = 0; k < 3; ++k) {
    one.push_back(gaussian_draws(300, 1, rng, 0.2 * k));
    flat.emplace_back(one.back().data(), one.back().data() + 300);
  }
  EXPECT_NEAR(psrf_multivariate(one), psrf(flat), 1e-12);
}

TEST(PsrfMultivariate, AtLeastEveryUnivariateAndNearOneForIid) {
  std::mt19937_64 rng(14);
  std::vector<MatrixXd> chains;
  for (int k = 0; k < 4; ++k) {
    MatrixXd x = gaussian_draws(2000, 3, rng);
    x.col(1) += 0.5 * x.col(0);  // correlated components
    chains.push_back(x);
  }
  const double mv = psrf_multivariate(chains);
  EXPECT_GE(mv, 0.99);
  EXPECT_LE(mv, 1.05);
  chains[3].col(2).array() += 2.0;  // B/n = 1, so the bound is about sqrt(1 + 5/4)
  const double shifted = psrf_multivariate(chains);
  for (int p = 0; p < 3; ++p) {
    std::vector<std::vector<double>> u;
    for (const auto& c : chains) u.emplace_back(c.col(p).data(), c.col(p).data() + c.rows());
    EXPECT_GE(shifted, psrf(u) - 1e-12);
  }
  EXPECT_GT(shifted, 1.2);
}

TEST(Tcr, SingleDrawIsDeterministic) {
  const std::vector<double> log_c{5.6, 5.65, 5.7, 5.9, 6.0};
  const double sd = stats::stddev(log_c);
  std::mt19937_64 rng(15);
  const auto t = tcr_density({{"A", {0.8}}}, {{"A", 1.0}}, log_c, rng);
  ASSERT_EQ(t.draws.size(), 1u);
  EXPECT_DOUBLE_EQ(t.draws[0], 0.8 * std::numbers::ln2 / sd);
  EXPECT_DOUBLE_EQ(t.median, t.draws[0]);
}

TEST(Tcr, HomogeneousOfDegreeOne) {
  const std::vector<double> log_c{5.6, 5.7, 5.75, 6.1};
  std::vector<double> b{0.3, 0.9, 1.4, -0.2}, cb;
  for (double v : b) cb.push_back(2.5 * v);
  const auto t = tcr_transform(b, log_c), ct = tcr_transform(cb, log_c);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_DOUBLE_EQ(ct[i], 2.5 * t[i]);
  std::mt19937_64 r1(1), r2(1);
  const auto a = tcr_density({{"A", b}, {"B", b}}, {{"A", 0.5}, {"B", 0.5}}, log_c, r1);
  const auto c = tcr_density({{"A", cb}, {"B", cb}}, {{"A", 0.5}, {"B", 0.5}}, log_c, r2);
  ASSERT_EQ(a.draws.size(), c.draws.size());
  for (std::size_t i = 0; i < a.draws.size(); ++i) EXPECT_DOUBLE_EQ(c.draws[i], 2.5 * a.draws[i]);
}

TEST(Tcr, ZeroWeightScenarioIsIgnored) {
  const std::vector<double> log_c{5.6, 5.7, 5.75, 6.1};
  const std::vector<double> a{0.3, 0.9, 1.4}, b{10.0, 11.0};
  std::mt19937_64 rng(16);
  const auto t = tcr_density({{"A", a}, {"B", b}}, {{"A", 1.0}, {"B", 0.0}}, log_c, rng);
  EXPECT_EQ(t.draws, tcr_transform(a, log_c));
  ASSERT_EQ(t.scenario_mix.size(), 2u);
}

TEST(Tcr, EqualMixMatchesPooledDistribution) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> za(0.6, 0.05), zb(0.8, 0.1);
  const int n = 100000;
  std::vector<double> a(n), b(n);
  for (double& v : a) v = za(rng);
  for (double& v : b) v = zb(rng);
  const std::vector<double> log_c{5.6, 5.62, 5.7, 5.8, 6.0};
  const auto t = tcr_density({{"A", a}, {"B", b}}, {{"A", 0.5}, {"B", 0.5}}, log_c, rng);
  ASSERT_EQ(t.draws.size(), static_cast<std::size_t>(n));
  std::vector<double> pooled = tcr_transform(a, log_c);
  const auto tb = tcr_transform(b, log_c);
  pooled.insert(pooled.end(), tb.begin(), tb.end());
  EXPECT_LT(stats::ks_distance(t.draws, pooled), 0.01);
  std::vector<double> s = t.draws;
  std::sort(s.begin(), s.end());
  EXPECT_DOUBLE_EQ(t.median, stats::quantile_sorted(s, 0.5));
  EXPECT_LT(t.lower95, t.median);
  EXPECT_GT(t.upper95, t.median);
}

TEST(Tcr, Errors) {
  const std::vector<double> log_c{5.6, 5.7};
  std::mt19937_64 rng(18);
  EXPECT_THROW(tcr_density({{"A", {}}}, {{"A", 1.0}}, log_c, rng), InsufficientSampleError);
  EXPECT_THROW(tcr_density({{"A", {1.0}}}, {{"A", 0.7}}, log_c, rng), ParameterDomainError);
  EXPECT_THROW(tcr_transform(std::vector<double>{1.0}, std::vector<double>{5.0, 5.0}), DegenerateInputError);
}
