#pragma once

// Special functions of the Ornstein-Uhlenbeck generator
//   A = 1/2 d^2/dx^2 + (r x + d) d/dx
// and of the deterministic clock V used by the general-payoff signal.

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kyleback/numerics.hpp"

namespace kyleback {

struct OUParams {
  double r = 1.0;  ///< mean-reversion (repulsion) rate, > 0
  double d = 0.0;  ///< drift offset

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("OUParams: r must be finite and > 0");
    if (!std::isfinite(d)) throw std::invalid_argument("OUParams: d must be finite");
  }
  double shift() const { return d / r; }
};

/// V(t) = int_0^t sigma^2(s) ds with sigma^2(t) = C^2 e^{-2rt} / (1 + C^2 e^{-2rt}).
struct TimeChange {
  double r = 1.0;
  double c_sq = 2.0;

  TimeChange() = default;
  TimeChange(double rate, double c_squared) : r(rate), c_sq(c_squared) {
    if (!(r > 0.0)) throw std::invalid_argument("TimeChange: r must be > 0");
    if (!(c_sq > 0.0)) throw std::invalid_argument("TimeChange: C^2 must be > 0");
  }
  /// The clock used by the general equilibrium, C^2 = 2r.
  static TimeChange equilibrium(double rate) { return TimeChange(rate, 2.0 * rate); }

  double v_inf() const { return std::log1p(c_sq) / (2.0 * r); }
};

struct DensityQuery {
  double t = 0.0;  ///< elapsed time
  double x = 0.0;  ///< start level
  double y = 0.0;  ///< end level
};

// ---------------------------------------------------------------------------
// Scale function s(x) = sqrt(r/pi) int_{-inf}^x exp(-r (y + d/r)^2) dy

/// Standardised argument z with s(x) = Phi(z).
inline double scale_argument(double x, const OUParams& p) { return std::sqrt(2.0 * p.r) * (x + p.shift()); }

inline double scale_s(double x, const OUParams& p) {
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  return numerics::normal_cdf(scale_argument(x, p));
}

inline double scale_s_deriv(double x, const OUParams& p) {
  const double u = x + p.shift();
  return std::sqrt(p.r / std::numbers::pi) * std::exp(-p.r * u * u);
}

inline double scale_s_deriv2(double x, const OUParams& p) {
  return -2.0 * p.r * (x + p.shift()) * scale_s_deriv(x, p);
}

/// s^{-1}(prob): bisection seeded with the normal-quantile closed form, then
/// three Newton steps; tolerance 1e-12 in x.
inline double scale_s_inv(double prob, const OUParams& p) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw std::domain_error("scale_s_inv: probability must lie in (0,1), got " + std::to_string(prob));
  }
  const double seed = numerics::normal_quantile(prob) / std::sqrt(2.0 * p.r) - p.shift();
  numerics::RootOptions opt;
  opt.x_tol = 1e-12;
  opt.newton_polish = 3;
  return numerics::solve_increasing([&](double x) { return scale_s(x, p); },
                                    [&](double x) { return scale_s_deriv(x, p); }, prob, seed,
                                    1e-6 * std::max(1.0, std::abs(seed)), opt);
}

struct HazardPair {
  double up;    ///< s'/s
  double down;  ///< s'/(1-s)
};

/// (s'/s, s'/(1-s)). Inside |x + d/r| <= 6 the plain ratio is used; outside it
/// the ratio is taken through the scaled complementary error function so
/// neither tail produces 0/0.
inline HazardPair hazard_pair(double x, const OUParams& p) {
  const double u = x + p.shift();
  if (std::abs(u) <= 6.0) {
    const double sp = scale_s_deriv(x, p);
    const double s = scale_s(x, p);
    return {sp / s, sp / numerics::normal_cdf(-scale_argument(x, p))};
  }
  const double z = scale_argument(x, p);
  const double k = std::sqrt(2.0 * p.r);
  return {k * numerics::normal_hazard_lower(z), k * numerics::normal_hazard_lower(-z)};
}

// ---------------------------------------------------------------------------
// Gaussian kernel and OU transition density (d = 0)

inline double gauss_kernel(double variance, double x) {
  if (!(variance > 0.0)) throw std::domain_error("gauss_kernel: variance must be > 0");
  return std::exp(-0.5 * x * x / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

/// Variance (e^{2rt} - 1)/(2r) of the OU transition over elapsed time t.
inline double ou_variance(double t, double r) { return std::expm1(2.0 * r * t) / (2.0 * r); }

inline double ou_density(const DensityQuery& q, double r) {
  if (q.t == 0.0) throw std::domain_error("ou_density: t = 0 is a point mass");
  if (!(q.t > 0.0)) throw std::domain_error("ou_density: t must be > 0");
  return gauss_kernel(ou_variance(q.t, r), q.y - q.x * std::exp(r * q.t));
}

// ---------------------------------------------------------------------------
// sigma^2 and the time change

inline double sigma_sq(double t, const TimeChange& tc) {
  if (t < 0.0) throw std::domain_error("sigma_sq: t must be >= 0");
  const double e = tc.c_sq * std::exp(-2.0 * tc.r * t);
  return e / (1.0 + e);
}

inline double time_change_V(double t, const TimeChange& tc) {
  if (t < 0.0) throw std::domain_error("time_change_V: t must be >= 0");
  if (std::isinf(t)) return tc.v_inf();
  // log((1+C^2)/(1+C^2 e^{-2rt})) written to keep precision for small t.
  const double e = tc.c_sq * std::exp(-2.0 * tc.r * t);
  return (std::log1p(tc.c_sq) - std::log1p(e)) / (2.0 * tc.r);
}

inline double time_change_V_inv(double u, const TimeChange& tc) {
  if (u < 0.0) throw std::domain_error("time_change_V_inv: u must be >= 0");
  if (!(u < tc.v_inf())) throw std::domain_error("time_change_V_inv: u must be < V(inf)");
  // e^{-2rt} = ((1+C^2) e^{-2ru} - 1)/C^2 = 1 - (1+C^2)(1 - e^{-2ru})/C^2
  const double w = -(1.0 + tc.c_sq) * std::expm1(-2.0 * tc.r * u) / tc.c_sq;
  return -std::log1p(-w) / (2.0 * tc.r);
}

// ---------------------------------------------------------------------------
// Residuals of the candidate-coefficient ODEs

/// 1/2 a^2 a'' + a' phi + (r - phi') a on each grid level.
inline std::vector<double> ode_residual_phia(const numerics::ScalarFunction& a, const numerics::ScalarFunction& phi,
                                             std::span<const double> grid, double r) {
  if (grid.size() < 3) throw std::invalid_argument("ode_residual_phia: grid needs at least 3 points");
  std::vector<double> out;
  out.reserve(grid.size());
  for (double x : grid) {
    const double av = a(x);
    if (!(av > 0.0)) throw std::domain_error("ode_residual_phia: a must be positive on the grid");
    out.push_back(0.5 * av * av * a.deriv2(x) + a.deriv(x) * phi(x) + (r - phi.deriv(x)) * av);
  }
  return out;
}

/// Generator applied to h: 1/2 a^2 h'' + phi h'. Zero for a scale function.
inline std::vector<double> generator_residual(const numerics::ScalarFunction& h, const numerics::ScalarFunction& a,
                                              const numerics::ScalarFunction& phi, std::span<const double> grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (double x : grid) {
    const double av = a(x);
    out.push_back(0.5 * av * av * h.deriv2(x) + phi(x) * h.deriv(x));
  }
  return out;
}

/// Drift of R = f(Y), f(x) = int_c^x 1/a, written as a function of the Y level:
///   mu(x) = phi(x)/a(x) - a'(x)/2.
inline double transformed_drift(const numerics::ScalarFunction& a, const numerics::ScalarFunction& phi, double x) {
  return phi(x) / a(x) - 0.5 * a.deriv(x);
}

/// d mu / dR at level x (chain rule dR = dx / a). Equals r when (a, phi)
/// solve the coefficient ODE.
inline double transformed_drift_slope(const numerics::ScalarFunction& a, const numerics::ScalarFunction& phi,
                                      double x) {
  const double h = numerics::fd_step(x);
  const auto mu = [&](double y) { return transformed_drift(a, phi, y); };
  return numerics::central_d1(mu, x, h) * a(x);
}

struct OuReduction {
  std::vector<double> transformed;  ///< R_k = f(Y_k)
  double drift_slope = 0.0;         ///< regression slope of dR/dt on R
  double slope_se = 0.0;
  double intercept = 0.0;
  double model_slope = 0.0;  ///< d mu/dR from (a, phi) at the path start
};

/// Maps a sampled path of Y (uniform step dt) through f(x) = int_c^x 1/a and
/// estimates the slope of the drift of R by regressing increments on levels.
inline OuReduction reduce_to_ou(const numerics::ScalarFunction& a, const numerics::ScalarFunction& phi, double c,
                                std::span<const double> path, double dt) {
  if (path.size() < 3) throw std::invalid_argument("reduce_to_ou: path needs at least 3 points");
  if (!(dt > 0.0)) throw std::invalid_argument("reduce_to_ou: dt must be > 0");
  OuReduction out;
  out.transformed.reserve(path.size());
  const auto inv_a = [&](double y) {
    const double av = a(y);
    if (!(av > 0.0) || !std::isfinite(av)) {
      throw std::domain_error("reduce_to_ou: 1/a is not integrable at level " + std::to_string(y));
    }
    return 1.0 / av;
  };
  for (double y : path) {
    const std::size_t panels = 1 + static_cast<std::size_t>(std::abs(y - c));
    const double f = numerics::integrate_gl(inv_a, c, y, panels, 32);
    if (!std::isfinite(f)) throw std::domain_error("reduce_to_ou: 1/a is not integrable on the path range");
    out.transformed.push_back(f);
  }
  // OLS of (R_{k+1} - R_k)/dt on R_k.
  const std::size_t n = path.size() - 1;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = out.transformed[k];
    const double y = (out.transformed[k + 1] - x) / dt;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double nn = static_cast<double>(n);
  const double mx = sx / nn;
  const double my = sy / nn;
  const double vxx = sxx - nn * mx * mx;
  out.drift_slope = (sxy - nn * mx * my) / vxx;
  out.intercept = my - out.drift_slope * mx;
  double rss = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = out.transformed[k];
    const double y = (out.transformed[k + 1] - x) / dt;
    const double e = y - out.intercept - out.drift_slope * x;
    rss += e * e;
  }
  out.slope_se = std::sqrt(rss / (nn - 2.0) / vxx);
  out.model_slope = transformed_drift_slope(a, phi, path[0]);
  return out;
}

}  // namespace kyleback
