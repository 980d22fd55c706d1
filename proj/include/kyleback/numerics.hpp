#pragma once

// Scalar numerical kernels shared by the model headers: Gaussian special
// functions, fixed quadrature rules, monotone root finding and central
// difference stencils.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>

namespace kyleback {

/// Raised when a numerical path leaves the finite reals.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

namespace numerics {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;  // 1/sqrt(2 pi)
inline constexpr double kSqrt2 = std::numbers::sqrt2;

inline double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

/// Standard normal CDF; relative accuracy is kept in the lower tail via erfc.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// Standard normal quantile. Rejects p outside (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("normal_quantile: probability must lie in (0,1), got " + std::to_string(p));
  }
  return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Scaled complementary error function exp(u^2) erfc(u).
///
/// For u below 6 the product is formed directly (erfc keeps full relative
/// accuracy there). Above, the Laplace continued fraction
///   erfc(u) = exp(-u^2)/sqrt(pi) * 1/(u + (1/2)/(u + 1/(u + (3/2)/(u + ...))))
/// is evaluated by modified Lentz, which avoids the 0 * inf product.
inline double erfcx(double u) {
  if (u < 6.0) {
    if (u < -26.0) return std::numeric_limits<double>::infinity();
    return std::exp(u * u) * std::erfc(u);
  }
  constexpr double tiny = 1e-300;
  double f = u;
  double c = u;
  double d = 0.0;
  for (int k = 1; k < 500; ++k) {
    const double a = 0.5 * k;
    d = u + a * d;
    if (std::abs(d) < tiny) d = tiny;
    c = u + a / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 / (std::sqrt(std::numbers::pi) * f);
}

/// log Phi(z), finite for every finite z (Phi itself underflows below -38).
inline double log_normal_cdf(double z) {
  if (z > -5.0) return z > 0.0 ? std::log1p(-normal_cdf(-z)) : std::log(normal_cdf(z));
  // Phi(z) = erfcx(-z/sqrt2) exp(-z^2/2) / 2
  return std::log(0.5 * erfcx(-z / kSqrt2)) - 0.5 * z * z;
}

/// phi(z)/Phi(z), the inverse Mills ratio of the lower tail, stable for all z.
inline double normal_hazard_lower(double z) {
  // phi(z)/Phi(z) = sqrt(2/pi) / erfcx(-z/sqrt2)
  return std::sqrt(2.0 / std::numbers::pi) / erfcx(-z / kSqrt2);
}

// ---------------------------------------------------------------------------
// Quadrature rules

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

inline QuadratureRule build_gauss_legendre(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t m = (n + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = ((2.0 * jj + 1.0) * z * p2 - jj * p3) / (jj + 1.0);
      }
      pp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

// Physicists' Gauss-Hermite (weight exp(-x^2)). Nodes start from the
// eigenvalues of the Jacobi matrix and are polished by Newton steps on the
// orthonormal Hermite functions p_j(x) e^{-x^2/2}, which stay bounded where
// the bare polynomials overflow; the weights come from the same recurrence.
inline QuadratureRule build_gauss_hermite(std::size_t n) {
  constexpr double pim4 = 0.7511255444649425;  // pi^{-1/4}
  const auto size = static_cast<Eigen::Index>(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(size);
  Eigen::VectorXd off(std::max<Eigen::Index>(size - 1, 0));
  for (Eigen::Index j = 0; j + 1 < size; ++j) off[j] = std::sqrt(0.5 * static_cast<double>(j + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& guess = eig.eigenvalues();  // ascending

  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = guess[static_cast<Eigen::Index>(i)];
    double pp = 1.0;
    for (int it = 0; it < 8; ++it) {
      double p1 = pim4 * std::exp(-0.5 * z * z);
      double p2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / (jj + 1.0)) * p2 - std::sqrt(jj / (jj + 1.0)) * p3;
      }
      pp = std::sqrt(2.0 * nd) * p2;
      if (pp == 0.0) break;  // function underflowed: keep the eigenvalue
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    rule.nodes[i] = z;
    // 2 / (polynomial derivative)^2, with the e^{-z^2} factor taken back out.
    rule.weights[i] = pp == 0.0 ? 0.0 : std::exp(std::log(2.0) - 2.0 * std::log(std::abs(pp)) - z * z);
  }
  // Symmetrise.
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double z = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

template <class Builder>
const QuadratureRule& cached_rule(std::map<std::size_t, QuadratureRule>& cache, std::mutex& mu, std::size_t n,
                                  Builder build) {
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build(n)).first;
  return it->second;
}

}  // namespace detail

/// Gauss-Legendre rule on [-1,1]. Tables are built once and shared read-only.
inline const QuadratureRule& gauss_legendre(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mu;
  if (n == 0) throw std::invalid_argument("gauss_legendre: need at least one node");
  return detail::cached_rule(cache, mu, n, detail::build_gauss_legendre);
}

/// Gauss-Hermite rule for weight exp(-x^2); n is capped at 512.
inline const QuadratureRule& gauss_hermite(std::size_t n) {
  static std::map<std::size_t, QuadratureRule> cache;
  static std::mutex mu;
  if (n == 0 || n > 512) throw std::invalid_argument("gauss_hermite: node count must lie in [1,512]");
  return detail::cached_rule(cache, mu, n, detail::build_gauss_hermite);
}

/// Integral of f over [a,b] with an n-node Gauss-Legendre rule on each of
/// `panels` equal sub-intervals.
template <class F>
double integrate_gl(F&& f, double a, double b, std::size_t panels = 1, std::size_t n = 32) {
  if (panels == 0) panels = 1;
  const auto& rule = gauss_legendre(n);
  const double width = (b - a) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    const double half = 0.5 * width;
    const double mid = lo + half;
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    total += acc * half;
  }
  return total;
}

/// Integral of f over the real line: Gauss-Legendre on (-1,1) after the map
/// x = t/(1-t^2). f must decay fast enough for the mapped integrand to vanish
/// at the ends.
template <class F>
double integrate_real_line(F&& f, std::size_t n = 128) {
  const auto& rule = gauss_legendre(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double t = rule.nodes[i];
    const double one_m = 1.0 - t * t;
    const double x = t / one_m;
    const double jac = (1.0 + t * t) / (one_m * one_m);
    acc += rule.weights[i] * f(x) * jac;
  }
  return acc;
}

/// E[f(mean + sd * Z)] for Z standard normal with an n-node Gauss-Hermite rule.
template <class F>
double gaussian_expectation(F&& f, double mean, double sd, std::size_t n) {
  const auto& rule = gauss_hermite(n);
  const double scale = kSqrt2 * sd;
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    if (rule.weights[i] == 0.0) continue;
    acc += rule.weights[i] * f(mean + scale * rule.nodes[i]);
  }
  return acc / std::sqrt(std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Root finding

struct RootOptions {
  double x_tol = 1e-12;
  int newton_polish = 3;
  int max_expansions = 60;
  int max_bisections = 400;
};

/// Root of a strictly increasing f: the bracket is grown geometrically around
/// `guess`, bisected to x_tol, then polished with Newton steps that are only
/// accepted while they stay inside the final bracket.
template <class F, class DF>
double solve_increasing(F&& f, DF&& df, double target, double guess, double step, const RootOptions& opt = {}) {
  if (!(step > 0.0)) step = 1.0;
  double lo = guess - step;
  double hi = guess + step;
  double flo = f(lo) - target;
  double fhi = f(hi) - target;
  int expansions = 0;
  while (flo > 0.0 && expansions < opt.max_expansions) {
    hi = lo;
    fhi = flo;
    step *= 2.0;
    lo -= step;
    flo = f(lo) - target;
    ++expansions;
  }
  while (fhi < 0.0 && expansions < opt.max_expansions) {
    lo = hi;
    flo = fhi;
    step *= 2.0;
    hi += step;
    fhi = f(hi) - target;
    ++expansions;
  }
  if (!(flo <= 0.0 && fhi >= 0.0)) {
    throw std::domain_error("solve_increasing: target " + std::to_string(target) + " is not bracketed");
  }
  for (int i = 0; i < opt.max_bisections && hi - lo > opt.x_tol * std::max(1.0, std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid) - target;
    if (fm == 0.0) {
      lo = hi = mid;
      break;
    }
    (fm < 0.0 ? lo : hi) = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < opt.newton_polish; ++i) {
    const double d = df(x);
    if (!(d > 0.0) || !std::isfinite(d)) break;
    const double next = x - (f(x) - target) / d;
    if (!(next >= lo && next <= hi)) break;
    x = next;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Step used by the residual operations: max(1e-5, 1e-7 |x|).
inline double fd_step(double x) { return std::max(1e-5, 1e-7 * std::abs(x)); }

/// Fourth-order central first derivative.
template <class F>
double central_d1(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

/// Fourth-order central second derivative.
template <class F>
double central_d2(F&& f, double x, double h) {
  return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h);
}

/// Univariate function with optional analytic derivatives. Missing
/// derivatives fall back to fourth-order central differences.
struct ScalarFunction {
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;

  double operator()(double x) const { return value(x); }
  double deriv(double x) const { return d1 ? d1(x) : central_d1(value, x, fd_step(x)); }
  double deriv2(double x) const { return d2 ? d2(x) : central_d2(value, x, fd_step(x)); }
};

}  // namespace numerics
}  // namespace kyleback
