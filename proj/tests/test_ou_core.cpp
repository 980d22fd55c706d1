#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kyleback/ou_core.hpp"
#include "kyleback/sde_engine.hpp"

using namespace kyleback;

namespace {

constexpr double kRootPi = 0.56418958354775628;  // 1/sqrt(pi)

struct ScaleCase {
  double x, r, d, expected;
};

// mpmath quadrature of sqrt(r/pi) int_{-inf}^x exp(-r(y+d/r)^2) dy.
TEST(ScaleS, MatchesQuadratureOracle) {
  const ScaleCase cases[] = {
      {-3, 0.25, -1, 3.7154918617070637e-7}, {0.5, 0.25, -1, 0.0066641643904087781},
      {-3, 0.25, 0, 0.016947426762344636},   {0.5, 0.25, 0, 0.63816319508411847},
      {-3, 0.25, 1, 0.76024993890652327},    {0.5, 0.25, 1, 0.99926864170665942},
      {-3, 1, -1, 7.7086289501400094e-9},    {0.5, 1, -1, 0.23975006109347673},
      {-3, 1, 0, 1.1045248499292721e-5},     {0.5, 1, 0, 0.76024993890652327},
      {-3, 1, 1, 0.0023388674905236329},     {0.5, 1, 1, 0.98305257323765536},
      {-3, 4, -1, 1.9210741635603237e-20},   {0.5, 4, -1, 0.76024993890652327},
      {-3, 4, 0, 1.0759868356249457e-17},    {0.5, 4, 0, 0.92135039647485743},
      {-3, 4, 1, 3.678923958987199e-15},     {0.5, 4, 1, 0.98305257323765536},
  };
  for (const auto& c : cases) {
    const double s = scale_s(c.x, OUParams{c.r, c.d});
    EXPECT_NEAR(s / c.expected, 1.0, 1e-12) << c.x << " " << c.r << " " << c.d;
  }
}

TEST(ScaleS, SpecExamples) {
  const OUParams p{1.0, 0.0};
  EXPECT_DOUBLE_EQ(scale_s(0.0, p), 0.5);
  EXPECT_NEAR(scale_s(1.0, p), 0.92135039647485743, 1e-14);
  EXPECT_EQ(scale_s(INFINITY, p), 1.0);
  EXPECT_EQ(scale_s(-INFINITY, p), 0.0);
  EXPECT_NEAR(scale_s(40.0, p), 1.0, 0.0);
  EXPECT_NEAR(scale_s_deriv(0.0, p), kRootPi, 1e-15);
}

TEST(ScaleS, DerivativesAgreeWithDifferences) {
  const OUParams p{0.7, -0.3};
  for (double x : {-2.0, -0.1, 0.4, 1.5}) {
    EXPECT_NEAR(scale_s_deriv(x, p), numerics::central_d1([&](double u) { return scale_s(u, p); }, x, 1e-3), 1e-10);
    EXPECT_NEAR(scale_s_deriv2(x, p),
                numerics::central_d1([&](double u) { return scale_s_deriv(u, p); }, x, 1e-3), 1e-10);
  }
}

TEST(ScaleSInv, OracleAndErrors) {
  EXPECT_NEAR(scale_s_inv(0.3, OUParams{1, 0}), -0.37080715859355795, 1e-12);
  EXPECT_NEAR(scale_s_inv(0.9, OUParams{0.25, 1}), -2.1876123951263534, 1e-11);
  EXPECT_NEAR(scale_s_inv(1e-6, OUParams{4, -1}), -1.4305892813128248, 1e-12);
  EXPECT_NEAR(scale_s_inv(0.5, OUParams{1, 0}), 0.0, 1e-14);
  EXPECT_THROW(scale_s_inv(0.0, OUParams{}), std::domain_error);
  EXPECT_THROW(scale_s_inv(1.0, OUParams{}), std::domain_error);
}

// Property: roundtrip on x in [-5,5] for random (r, d).
TEST(ScaleSInv, PropertyRoundtrip) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> rr(0.25, 4.0), dd(-1.0, 1.0), xx(-5.0, 5.0);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const OUParams p{rr(gen), dd(gen)};
    const double x = xx(gen);
    const double s = scale_s(x, p);
    if (!(s > 1e-300 && s < 1.0 - 1e-15)) continue;  // saturated: not invertible in doubles
    // The inverse is only as sharp as s itself resolves x: one ulp of s,
    // which near 1 is absolute rather than relative to 1 - s.
    const double resolution = 2.2e-16 * s / scale_s_deriv(x, p);
    ASSERT_NEAR(scale_s_inv(s, p), x, std::max(1e-10, 4 * resolution)) << p.r << " " << p.d << " " << x;
    ++checked;
  }
  EXPECT_GT(checked, 350);
}

TEST(HazardPair, OracleAndTails) {
  const OUParams p{1.0, 0.0};
  const auto h0 = hazard_pair(0.0, p);
  EXPECT_NEAR(h0.up, 2.0 * kRootPi, 1e-14);
  EXPECT_NEAR(h0.down, 2.0 * kRootPi, 1e-14);
  EXPECT_NEAR(hazard_pair(-10.0, p).up / 20.099024116734604, 1.0, 1e-13);
  EXPECT_NEAR(hazard_pair(-10.0, p).down / 2.0988281156772084e-44, 1.0, 1e-12);
  EXPECT_NEAR(hazard_pair(-30.0, p).up / 60.033296398756228, 1.0, 1e-13);
  EXPECT_EQ(hazard_pair(-30.0, p).down, 0.0);  // 7.7e-392 is below the double range
  EXPECT_NEAR(hazard_pair(8.0, p).up / 9.0485339842799213e-29, 1.0, 1e-12);
  EXPECT_NEAR(hazard_pair(8.0, p).down / 16.123119060068893, 1.0, 1e-13);
  const auto h = hazard_pair(-5.0, OUParams{4.0, 1.0});
  EXPECT_NEAR(h.up / 38.208255714526605, 1.0, 1e-13);
  EXPECT_NEAR(h.down / 7.2007555455399762e-40, 1.0, 1e-12);
  // s'/s ~ 2r|x| as x -> -inf
  EXPECT_NEAR(hazard_pair(-20.0, p).up / 40.0, 1.0, 2e-3);
}

// Property: both hazards finite, positive and continuous across |x+d/r| = 6.
TEST(HazardPair, PropertyContinuousAtBranch) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> rr(0.25, 4.0), dd(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const OUParams p{rr(gen), dd(gen)};
    for (double sgn : {-1.0, 1.0}) {
      const double edge = sgn * 6.0 - p.shift();
      const auto in = hazard_pair(edge - sgn * 1e-9, p);
      const auto out = hazard_pair(edge + sgn * 1e-9, p);
      const auto& a = sgn < 0 ? in.up : in.down;
      const auto& b = sgn < 0 ? out.up : out.down;
      ASSERT_TRUE(std::isfinite(a) && a > 0.0);
      ASSERT_NEAR(a / b, 1.0, 1e-7);
    }
  }
}

TEST(OuDensity, OracleNormalisationAndErrors) {
  EXPECT_NEAR(ou_density({0.7, 0.2, 1.1}, 1.0), 0.27529504976956828, 1e-14);
  for (double t : {0.05, 0.5, 2.0}) {
    for (double x : {-1.0, 0.0, 0.6}) {
      const double c = x * std::exp(t);
      const double sd = std::sqrt(ou_variance(t, 1.0));
      const double mass = numerics::integrate_gl([&](double y) { return ou_density({t, x, y}, 1.0); }, c - 12 * sd,
                                                 c + 12 * sd, 24, 32);
      EXPECT_NEAR(mass, 1.0, 1e-10);
    }
  }
  EXPECT_NEAR(ou_variance(1e-4, 1.0) / 1e-4, 1.0, 1.01e-4);
  EXPECT_THROW(ou_density({0.0, 0.0, 0.0}, 1.0), std::domain_error);
  EXPECT_THROW(ou_density({-1.0, 0.0, 0.0}, 1.0), std::domain_error);
}

TEST(OuDensity, ChapmanKolmogorov) {
  const double r = 1.0, t1 = 0.3, t2 = 0.5, x = 0.2;
  for (double y : {-1.0, 0.4, 2.0}) {
    const double lhs = numerics::integrate_gl(
        [&](double z) { return ou_density({t1, x, z}, r) * ou_density({t2, z, y}, r); }, -10.0, 10.0, 40, 32);
    EXPECT_NEAR(lhs, ou_density({t1 + t2, x, y}, r), 1e-10);
  }
}

TEST(GaussKernel, UnitMass) {
  EXPECT_NEAR(gauss_kernel(1.0, 0.0), numerics::kInvSqrt2Pi, 1e-16);
  EXPECT_NEAR(numerics::integrate_gl([](double x) { return gauss_kernel(0.3, x); }, -10, 10, 20, 32), 1.0, 1e-12);
  EXPECT_THROW(gauss_kernel(0.0, 1.0), std::domain_error);
}

TEST(TimeChange, SigmaAndClock) {
  const auto tc = TimeChange::equilibrium(1.0);
  EXPECT_NEAR(sigma_sq(0.0, tc), 2.0 / 3.0, 1e-15);
  EXPECT_LT(sigma_sq(60.0, tc), 1e-50);
  EXPECT_NEAR(time_change_V(0.3, TimeChange::equilibrium(0.5)), 0.13879193609141819, 1e-14);
  EXPECT_NEAR(time_change_V(2.0, TimeChange::equilibrium(0.5)), 0.56621916951697281, 1e-14);
  EXPECT_NEAR(TimeChange::equilibrium(0.5).v_inf(), 0.69314718055994531, 1e-15);
  EXPECT_NEAR(time_change_V(0.3, tc), 0.17890368001420926, 1e-14);
  EXPECT_NEAR(time_change_V(2.0, tc), 0.53131799445995826, 1e-14);
  EXPECT_NEAR(tc.v_inf(), 0.54930614433405485, 1e-15);
  EXPECT_NEAR(time_change_V(0.3, TimeChange::equilibrium(2.0)), 0.20470290288425177, 1e-14);
  EXPECT_NEAR(time_change_V(2.0, TimeChange::equilibrium(2.0)), 0.40202424034983392, 1e-14);
  EXPECT_NEAR(TimeChange::equilibrium(2.0).v_inf(), 0.40235947810852509, 1e-15);
  EXPECT_THROW(sigma_sq(-1.0, tc), std::domain_error);
  EXPECT_THROW(time_change_V_inv(tc.v_inf(), tc), std::domain_error);
  EXPECT_THROW(TimeChange(1.0, 0.0), std::invalid_argument);
}

// Property: V is the integral of sigma^2, V_inv inverts V, and the
// bridge-clock identity e^{2r(Vinf - V(t))} = 1 + 2r e^{-2rt} holds.
TEST(TimeChange, PropertyClockIdentities) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> rr(0.1, 4.0), tt(0.0, 6.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double r = rr(gen), t = tt(gen);
    const auto tc = TimeChange::equilibrium(r);
    const double lhs = std::exp(2.0 * r * (tc.v_inf() - time_change_V(t, tc)));
    ASSERT_NEAR(lhs, 1.0 + 2.0 * r * std::exp(-2.0 * r * t), 1e-12 * lhs);
    const double v = time_change_V(t, tc);
    // dt = dV / sigma^2: an ulp of V costs ulp(V)/sigma^2(t) in t
    if (v < tc.v_inf() * (1 - 1e-9)) {
      ASSERT_NEAR(time_change_V_inv(v, tc), t, std::max(1e-9 * std::max(1.0, t), 8e-16 * v / sigma_sq(t, tc)));
    }
    const double integral = numerics::integrate_gl([&](double s) { return sigma_sq(s, tc); }, 0.0, t, 8, 20);
    ASSERT_NEAR(integral, v, 1e-12);
  }
}

TEST(CoefficientOde, PhiaResidual) {
  const double r = 1.3, d = 0.4;
  const numerics::ScalarFunction one{[](double) { return 1.0; }, [](double) { return 0.0; },
                                     [](double) { return 0.0; }};
  const numerics::ScalarFunction lin{[=](double x) { return r * x + d; }, [=](double) { return r; }, {}};
  std::vector<double> grid;
  for (int i = -40; i <= 40; ++i) grid.push_back(0.1 * i);
  for (double res : ode_residual_phia(one, lin, grid, r)) EXPECT_LE(std::abs(res), 1e-8);
  const numerics::ScalarFunction quad{[=](double x) { return r * x * x; }, {}, {}};
  const auto bad = ode_residual_phia(one, quad, grid, r);
  EXPECT_GT(std::abs(bad[10]), 0.1);  // x = -3: r - 2 r x != 0
  EXPECT_THROW(ode_residual_phia(one, lin, std::vector<double>{0.0, 1.0}, r), std::invalid_argument);
  const numerics::ScalarFunction neg{[](double) { return -1.0; }, {}, {}};
  EXPECT_THROW(ode_residual_phia(neg, lin, grid, r), std::domain_error);
}

TEST(CoefficientOde, ScaleFunctionIsHarmonic) {
  const OUParams p{1.0, 0.5};
  const numerics::ScalarFunction s{[&](double x) { return scale_s(x, p); }, [&](double x) { return scale_s_deriv(x, p); },
                                   [&](double x) { return scale_s_deriv2(x, p); }};
  const numerics::ScalarFunction one{[](double) { return 1.0; }, {}, {}};
  const numerics::ScalarFunction phi{[&](double x) { return p.r * x + p.d; }, {}, {}};
  const std::vector<double> grid{-3, -1, 0, 0.5, 2};
  for (double res : generator_residual(s, one, phi, grid)) EXPECT_NEAR(res, 0.0, 1e-14);
}

TEST(ReduceToOu, ConstantVolatility) {
  const double r = 1.0;
  const numerics::ScalarFunction one{[](double) { return 1.0; }, {}, {}};
  const numerics::ScalarFunction phi{[&](double x) { return r * x; }, {}, {}};
  EXPECT_NEAR(transformed_drift_slope(one, phi, 0.7), r, 1e-9);
  const double s0 = 0.5;
  const numerics::ScalarFunction sig{[&](double) { return s0; }, {}, {}};
  const numerics::ScalarFunction phi2{[&](double x) { return r * x; }, {}, {}};
  EXPECT_NEAR(transformed_drift_slope(sig, phi2, -1.2), r, 1e-9);
  // f(x) = x / s0 on a constant-a path
  const std::vector<double> path{0.0, 0.1, 0.3, 0.2};
  const auto red = reduce_to_ou(sig, phi2, 0.0, path, 0.01);
  for (std::size_t k = 0; k < path.size(); ++k) EXPECT_NEAR(red.transformed[k], path[k] / s0, 1e-12);
}

TEST(ReduceToOu, RegressionSlopeMatchesR) {
  // dY = dB + rY dt; pooled no-intercept regression of dR on R dt over many
  // paths, SE by the delta method on per-path numerators and denominators.
  const double r = 1.0;
  const numerics::ScalarFunction one{[](double) { return 1.0; }, {}, {}};
  const numerics::ScalarFunction phi{[&](double x) { return r * x; }, {}, {}};
  const auto grid = make_grid(2.0, 1e-2);
  std::vector<double> num, den;
  for (std::size_t i = 0; i < 400; ++i) {
    const auto path = euler_maruyama([&](double, double x) { return r * x; }, [](double, double) { return 1.0; }, 0.0,
                                     grid, NoiseStream(99, i));
    const auto red = reduce_to_ou(one, phi, 0.0, path, grid.dt);
    double n = 0.0, d = 0.0;
    for (std::size_t k = 0; k + 1 < red.transformed.size(); ++k) {
      n += red.transformed[k] * (red.transformed[k + 1] - red.transformed[k]);
      d += red.transformed[k] * red.transformed[k] * grid.dt;
    }
    num.push_back(n);
    den.push_back(d);
  }
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    sn += num[i];
    sd += den[i];
  }
  const double slope = sn / sd;
  double v = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) v += (num[i] - slope * den[i]) * (num[i] - slope * den[i]);
  const double se = std::sqrt(v) / sd;
  EXPECT_LE(std::abs(slope - r), 3.0 * se) << slope << " +- " << se;
}

}  // namespace
