#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "kyleback/rng.hpp"
#include "kyleback/sde_engine.hpp"

using namespace kyleback;

namespace {

TEST(Philox, KnownAnswer) {
  // Random123 known-answer vectors for philox4x32-10.
  EXPECT_EQ(Philox4x32::apply({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(NoiseStream, ChannelsAndPathsAreDistinct) {
  const NoiseStream a(42, 0), b(42, 1), c(43, 0);
  std::set<double> seen;
  for (auto ch : {Channel::brownian, Channel::payoff, Channel::horizon, Channel::exact, Channel::auxiliary}) {
    seen.insert(a.uniform(ch, 0));
    seen.insert(b.uniform(ch, 0));
    seen.insert(c.uniform(ch, 0));
  }
  EXPECT_EQ(seen.size(), 15u);
  EXPECT_EQ(a.normal(Channel::brownian, 5), NoiseStream(42, 0).normal(Channel::brownian, 5));
}

TEST(NoiseStream, SequenceMatchesIndexedDraws) {
  const NoiseStream s(9, 3);
  NormalSequence seq(s, Channel::brownian);
  for (std::uint64_t k = 0; k < 50; ++k) ASSERT_EQ(seq.next(), s.normal(Channel::brownian, k));
}

TEST(NoiseStream, MomentsAndRange) {
  double sum = 0.0, sum2 = 0.0, esum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const NoiseStream s(1, i);
    const double z = s.normal(Channel::auxiliary, 0);
    const double u = s.uniform(Channel::auxiliary, 1);
    ASSERT_TRUE(u > 0.0 && u < 1.0);
    sum += z;
    sum2 += z * z;
    esum += s.exponential(Channel::horizon, 0, 2.0);
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sum2 / n, 1.0, 4.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(esum / n, 0.5, 4.0 * 0.5 / std::sqrt(n));
}

TEST(TimeGrid, SpecExamples) {
  const auto g = make_grid(1.0, 0.5);
  EXPECT_EQ(g.n_steps, 2u);
  EXPECT_DOUBLE_EQ(g.time(1), 0.5);
  EXPECT_DOUBLE_EQ(g.t_end(), 1.0);
  const auto h = make_grid(1.0, 0.3);
  EXPECT_EQ(h.n_steps, 4u);
  EXPECT_NEAR(h.t_end(), 1.2, 1e-15);
  EXPECT_EQ(make_grid(8.0, 1e-3).n_steps, 8000u);
  EXPECT_EQ(make_grid(8.0, 1e-3).index_of(4.0), 4000u);
  EXPECT_THROW(make_grid(8.0, 1e-3).index_of(4.00031), std::invalid_argument);
  EXPECT_THROW(make_grid(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(make_grid(1.0, 0.0), std::invalid_argument);
}

TEST(EulerMaruyama, DeterministicOde) {
  const double r = 0.8;
  for (double dt : {1e-2, 1e-3}) {
    const auto g = make_grid(2.0, dt);
    const auto path = euler_maruyama([&](double, double x) { return r * x; }, [](double, double) { return 0.0; }, 1.0, g,
                                     NoiseStream(1, 0));
    const double exact = std::exp(r * g.t_end());
    EXPECT_LE(std::abs(path.back() - exact) / exact, 2.0 * r * g.t_end() * dt);
  }
}

TEST(EulerMaruyama, DivergenceIsReported) {
  const auto g = make_grid(1.0, 0.1);
  EXPECT_THROW(euler_maruyama([](double, double x) { return x * x * 1e200; }, [](double, double) { return 0.0; }, 1e200,
                              g, NoiseStream(1, 0)),
               divergence_error);
}

TEST(EulerMaruyama, OuMomentsWithinThreeSe) {
  const double r = 1.0, x0 = 0.3;
  const auto g = make_grid(1.0, 1e-3);
  std::vector<double> ends;
  for (std::size_t i = 0; i < 4000; ++i) {
    ends.push_back(euler_maruyama([&](double, double x) { return r * x; }, [](double, double) { return 1.0; }, x0, g,
                                  NoiseStream(3, i))
                       .back());
  }
  const auto m = moments(ends);
  const double var = std::expm1(2 * r) / (2 * r);
  EXPECT_LE(std::abs(m.mean - x0 * std::exp(r)), 3.0 * m.se());
  // SE of the sample variance for a Gaussian: var sqrt(2/(n-1))
  EXPECT_LE(std::abs(m.variance - var), 3.0 * var * std::sqrt(2.0 / (ends.size() - 1)));
}

TEST(EulerMaruyama, WeakErrorIsFirstOrder) {
  // The mean of Euler for dX = rX dt is x0 (1 + r dt)^n exactly, so the
  // weak error can be measured without sampling noise via the zero-noise path.
  const double r = 1.0, x0 = 1.0;
  std::vector<double> err;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    const auto g = make_grid(1.0, dt);
    const auto path = euler_maruyama([&](double, double x) { return r * x; }, [](double, double) { return 0.0; }, x0, g,
                                     NoiseStream(1, 0));
    err.push_back(std::abs(path.back() - x0 * std::exp(r)));
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double ratio = err[i - 1] / err[i];
    EXPECT_GE(ratio, 1.6);
    EXPECT_LE(ratio, 2.6);
  }
}

TEST(BrownianBundle, ThreadCountDoesNotMatter) {
  const auto g = make_grid(1.0, 0.01);
  const auto a = brownian_bundle(g, 64, 5, 1);
  const auto b = brownian_bundle(g, 64, 5, 4);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.path(7)[0], 0.0);
  EXPECT_THROW(brownian_bundle(g, 0, 5), std::invalid_argument);
}

TEST(QuadraticVariation, BrownianAndSmooth) {
  const auto g = make_grid(2.0, 1e-3);
  const auto b = brownian_bundle(g, 200, 8, 1);
  std::vector<double> qv;
  for (std::size_t i = 0; i < b.n_paths; ++i) qv.push_back(quadratic_variation(b.path(i)));
  EXPECT_NEAR(moments(qv).mean, 2.0, 0.02);
  double prev = INFINITY;
  for (double dt : {1e-2, 5e-3, 2.5e-3}) {
    const auto gs = make_grid(1.0, dt);
    std::vector<double> path(gs.n_steps + 1);
    for (std::size_t k = 0; k < path.size(); ++k) path[k] = std::sin(3.0 * gs.time(k));
    // sum of (f' dt)^2 halves with dt up to an O(dt^2) relative correction
    const double q = quadratic_variation(path);
    if (std::isfinite(prev)) EXPECT_NEAR(q / (0.5 * prev), 1.0, 1e-3);
    prev = q;
  }
  EXPECT_THROW(quadratic_variation(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(DiscountedIntegral, SpecExamples) {
  const double r = 0.7, T = 3.0, dt = 1e-3;
  const auto g = make_grid(T, dt);
  std::vector<double> ones(g.n_steps, 1.0), zeros(g.n_steps, 0.0), growth(g.n_steps);
  for (std::size_t k = 0; k < g.n_steps; ++k) growth[k] = std::exp(r * g.time(k));
  EXPECT_NEAR(discounted_integral(ones, r, g), -std::expm1(-r * T) / r, dt);
  EXPECT_EQ(discounted_integral(zeros, r, g), 0.0);
  EXPECT_NEAR(discounted_integral(growth, r, g), T, r * T * dt);
  EXPECT_THROW(discounted_integral(std::vector<double>(3, 1.0), r, g), std::invalid_argument);
}

TEST(PathwiseIntegral, SpecExamples) {
  const auto g = make_grid(1.0, 1e-3);
  const auto b = brownian_bundle(g, 400, 13, 1);
  std::vector<double> ito_err;
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    const auto p = b.path(i);
    std::vector<double> one(p.size() - 1, 1.0), zero(p.size() - 1, 0.0), lvl(p.begin(), p.end() - 1);
    ASSERT_NEAR(pathwise_integral_dx(one, p), p.back() - p.front(), 1e-12);
    ASSERT_EQ(pathwise_integral_dx(zero, p), 0.0);
    // int B dB = (B_T^2 - T)/2 with the discrete QV in place of T
    ito_err.push_back(pathwise_integral_dx(lvl, p) - 0.5 * (p.back() * p.back() - 1.0));
  }
  const auto m = moments(ito_err);
  EXPECT_LE(std::abs(m.mean), 3.0 * m.se() + 1e-12);
  EXPECT_LT(std::sqrt(m.variance), 0.05);
  EXPECT_THROW(pathwise_integral_dx(std::vector<double>{1.0}, std::vector<double>{0.0}), std::invalid_argument);
}

// Property: moments() agrees with a naive two-pass reference for random data.
TEST(Moments, PropertyAgainstReference) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z(3.0, 2.0);
  std::uniform_int_distribution<int> len(2, 300);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> xs(len(gen));
    for (double& x : xs) x = z(gen);
    long double s = 0, s2 = 0;
    for (double x : xs) s += x;
    const long double mu = s / xs.size();
    for (double x : xs) s2 += (x - mu) * (x - mu);
    const auto m = moments(xs);
    ASSERT_NEAR(m.mean, static_cast<double>(mu), 1e-12);
    ASSERT_NEAR(m.variance, static_cast<double>(s2 / (xs.size() - 1)), 1e-10);
  }
  EXPECT_EQ(moments(std::vector<double>{}).n, 0u);
  EXPECT_EQ(moments(std::vector<double>{2.0}).se(), 0.0);
}

}  // namespace
