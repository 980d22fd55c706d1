#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kyleback/bernoulli_equilibrium.hpp"
#include "kyleback/general_equilibrium.hpp"
#include "kyleback/verify_mc.hpp"

using namespace kyleback;

namespace {

// scipy.special.kolmogorov complement
TEST(Kolmogorov, CdfOracle) {
  EXPECT_NEAR(kolmogorov_cdf(0.5), 0.036054756335124893, 1e-12);
  EXPECT_NEAR(kolmogorov_cdf(0.9), 0.60726929205934566, 1e-12);
  EXPECT_NEAR(kolmogorov_cdf(1.0), 0.7300003283226455, 1e-12);
  EXPECT_NEAR(kolmogorov_cdf(1.3581), 0.95000036956833256, 1e-12);
  EXPECT_NEAR(kolmogorov_cdf(1.6276), 0.98999846266693925, 1e-12);
  EXPECT_NEAR(kolmogorov_cdf(2.5), 0.99999254669365589, 1e-12);
  EXPECT_EQ(kolmogorov_cdf(0.0), 0.0);
}

TEST(Bands, BonferroniAndPlain) {
  EXPECT_NEAR(bonferroni_band(1), 3.0, 1e-3);
  EXPECT_GT(bonferroni_band(4), bonferroni_band(2));
  EXPECT_EQ(plain_bands().width(10), 3.0);
  EXPECT_NEAR(BandPolicy{}.width(4), numerics::normal_quantile(1.0 - 0.0027 / 8.0), 1e-12);
}

std::vector<std::vector<double>> brownian_at(std::vector<double> times, std::size_t n, std::uint64_t seed,
                                             double drift = 0.0) {
  std::vector<std::vector<double>> out(times.size(), std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const NoiseStream s(seed, i);
    double b = 0.0, t = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
      b += std::sqrt(times[k] - t) * s.normal(Channel::auxiliary, k);
      t = times[k];
      out[k][i] = b + drift * t;
    }
  }
  return out;
}

TEST(MartingaleTest, SpecExamples) {
  const std::vector<double> t{1, 2, 4};
  EXPECT_TRUE(martingale_test(brownian_at(t, 5000, 1), t, 0.0).passed);
  EXPECT_TRUE(martingale_test(brownian_at(t, 5000, 2), t, std::nullopt).passed);
  EXPECT_FALSE(martingale_test(brownian_at(t, 5000, 3, 1.0), t, 0.0).passed);
  EXPECT_FALSE(martingale_test(brownian_at(t, 5000, 3, 1.0), t, std::nullopt).passed);
  // constant zero mean but increments pulled toward 0: only the level
  // regression can see it
  auto ou = brownian_at(t, 5000, 4);
  for (std::size_t i = 0; i < 5000; ++i) {
    const NoiseStream s(44, i);
    ou[0][i] = 3.0 * s.normal(Channel::auxiliary, 0);
    ou[1][i] = 0.5 * ou[0][i] + s.normal(Channel::auxiliary, 1);
    ou[2][i] = 0.5 * ou[1][i] + s.normal(Channel::auxiliary, 2);
  }
  EXPECT_FALSE(martingale_test(ou, t, std::nullopt).passed);
  EXPECT_THROW(martingale_test({{1.0, 2.0}}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

// Property: a heteroskedastic two-valued martingale (the announcement M_t)
// is not flagged by the level regression.
TEST(MartingaleTest, PropertyHeteroskedasticMartingale) {
  const std::vector<double> t{1, 2, 4, 8};
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::vector<double>> M(t.size(), std::vector<double>(4000));
    for (std::size_t i = 0; i < 4000; ++i) {
      const double tau = NoiseStream(seed, i).exponential(Channel::horizon, 0, 1.0);
      for (std::size_t k = 0; k < t.size(); ++k) M[k][i] = (t[k] >= tau ? 1.0 : 0.0) - std::min(t[k], tau);
    }
    failures += !martingale_test(M, t, 0.0).passed;
  }
  EXPECT_LE(failures, 2);
}

TEST(SupermartingaleTest, SpecExamples) {
  const std::vector<double> t{1, 2, 4};
  auto absb = brownian_at(t, 5000, 5);
  for (auto& col : absb)
    for (double& x : col) x = std::abs(x);
  EXPECT_FALSE(supermartingale_test(absb, t).passed);
  EXPECT_TRUE(supermartingale_test(brownian_at(t, 5000, 6, -0.5), t).passed);
  EXPECT_TRUE(supermartingale_test(brownian_at(t, 5000, 7), t).passed);
}

TEST(NormalityTest, SpecExamples) {
  std::vector<double> z(5000), u(5000);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = NoiseStream(8, i).normal(Channel::auxiliary, 0);
    u[i] = NoiseStream(8, i).uniform(Channel::auxiliary, 7) * 2.0 - 1.0;
  }
  EXPECT_TRUE(normality_test(z).passed);
  EXPECT_FALSE(normality_test(u).passed);
  EXPECT_FALSE(normality_test(z, 1.2).passed);
  EXPECT_THROW(normality_test(std::vector<double>(10, 0.0)), std::invalid_argument);
  std::vector<double> w(5000);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = NoiseStream(9, i).normal(Channel::auxiliary, 0);
  EXPECT_TRUE(ks_two_sample_test(z, w).passed);
  EXPECT_FALSE(ks_two_sample_test(z, u).passed);
}

// Property: under H0 the KS p-value is roughly uniform.
TEST(NormalityTest, PropertyPValueCalibration) {
  int rejections = 0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> z(1000);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = NoiseStream(1000 + trial, i).normal(Channel::auxiliary, 0);
    rejections += !normality_test(z, 1.0, 0.1).passed;
  }
  // 10% level: expect 20 of 200, binomial sd ~4.2
  EXPECT_GE(rejections, 5);
  EXPECT_LE(rejections, 38);
}

TEST(CalibrationTest, SpecExamples) {
  std::vector<double> p(8000), g(8000);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const NoiseStream s(10, i);
    p[i] = s.uniform(Channel::auxiliary, 0);
    g[i] = s.uniform(Channel::auxiliary, 1) < p[i] ? 1.0 : 0.0;
  }
  EXPECT_TRUE(calibration_test(p, g).passed);
  const auto binom = [](double q) { return q * (1.0 - q); };
  EXPECT_TRUE(calibration_test(p, g, {}, "calibration", binom).passed);
  std::vector<double> half(8000, 0.5), skew(8000);
  for (std::size_t i = 0; i < skew.size(); ++i) skew[i] = NoiseStream(11, i).uniform(Channel::auxiliary, 0) < 0.7;
  EXPECT_FALSE(calibration_test(half, skew).passed);
}

TEST(CalibrationTest, BernoulliEquilibriumAtTwo) {
  const BernoulliMarket m{0.5, {1.0, 0.0}};
  SimulationConfig cfg;
  cfg.n_paths = 4000;
  cfg.t_end = 2.0;
  cfg.checkpoints = {2.0};
  cfg.announcement = false;
  const auto run = simulate_equilibrium(m, std::nullopt, cfg);
  const auto rep = calibration_test(run.column(run.P, 0), run.per_path(run.gamma), {}, "calibration",
                                    [](double q) { return q * (1.0 - q); });
  EXPECT_TRUE(rep.passed) << rep.statistic;
}

TEST(ProfitOptimality, ZeroFactorAndCandidate) {
  const BernoulliMarket m{0.5, {1.0, 0.0}};
  SimulationConfig cfg;
  cfg.n_paths = 1500;
  cfg.checkpoints = {8.0};
  const std::vector<double> factors{0.0, 1.0};
  const auto res = profit_optimality_test(m, 1, factors, cfg);
  EXPECT_EQ(res.factors[0].profit.discounted, 0.0);
  EXPECT_NEAR(res.value, 0.28209479177387814, 1e-14);
  EXPECT_TRUE(res.report.passed) << res.report.statistic;
  EXPECT_TRUE(res.strictly_dominated());
  const std::vector<double> no_one{0.0, 2.0};
  EXPECT_THROW(profit_optimality_test(m, 1, no_one, cfg), std::invalid_argument);
}

TEST(AnnouncementSim, MartingalesAndJumps) {
  const BernoulliMarket m{0.5, {1.0, 0.0}};
  SimulationConfig cfg;
  cfg.n_paths = 4000;
  cfg.t_end = 4.0;
  cfg.checkpoints = {1.0, 2.0, 4.0};
  const auto run = simulate_equilibrium(m, std::nullopt, cfg);
  const auto a = announcement_sim(run, 1.0);
  EXPECT_TRUE(a.N_test.passed) << a.N_test.statistic;
  EXPECT_TRUE(a.M_test.passed) << a.M_test.statistic;
  EXPECT_TRUE(a.S_test.passed) << a.S_test.statistic;
  EXPECT_TRUE(a.U_test.passed) << a.U_test.statistic;
  EXPECT_TRUE(a.gap_test.passed);
  // Every announcement moves the price.
  EXPECT_EQ(a.positive_jump_fraction(), 1.0);
  // P(tau <= 4) = 1 - e^{-4}
  const double frac = static_cast<double>(a.n_jumps) / a.tau.size();
  EXPECT_NEAR(frac, 1.0 - std::exp(-4.0), 4.0 * std::sqrt(0.0179 / 4000.0));
  // E M_t = 0 exactly: E 1[t >= tau] = 1 - e^{-rt} = r E (t ^ tau)
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mo = moments(a.M[c]);
    EXPECT_LE(std::abs(mo.mean), 3.5 * mo.se());
  }
  auto no_tau = cfg;
  no_tau.announcement = false;
  EXPECT_THROW(announcement_sim(simulate_equilibrium(m, std::nullopt, no_tau), 1.0), std::invalid_argument);
}

TEST(DInvariance, SpecExamples) {
  const BernoulliMarket m{0.5, {1.0, 0.0}};
  SimulationConfig cfg;
  cfg.n_paths = 200;
  cfg.t_end = 4.0;
  cfg.checkpoints = {1.0, 4.0};
  const std::vector<double> both{0.0, 1.0}, one{0.0};
  const auto rep = d_invariance_test(m, both, cfg);
  EXPECT_TRUE(rep.passed) << rep.statistic;
  EXPECT_LE(rep.statistic, 5 * cfg.dt);
  EXPECT_EQ(d_invariance_test(m, one, cfg).statistic, 0.0);
}

}  // namespace
