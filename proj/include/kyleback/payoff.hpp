#pragma once

// Payoff maps Gamma = f(eta) for the general equilibrium: built-in monotone
// test functions and piecewise-linear tables read from CSV.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kyleback/numerics.hpp"

namespace kyleback {

struct PayoffSpec {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> f_inv;
  std::function<double(double)> f_prime;  ///< optional
  double growth_K = 1.0;                  ///< |f(y)| <= K exp(k y^2 / 4)
  double growth_k = 0.1;
  /// Optional closed form of E[f(mean + sd Z)]; used by the path simulator
  /// to avoid a quadrature per Euler step.
  std::function<double(double, double)> gaussian_mean;
  /// Optional closed form of E[f'(mean + sd Z)].
  std::function<double(double, double)> gaussian_slope;
};

inline PayoffSpec identity_payoff() {
  PayoffSpec p;
  p.name = "identity";
  p.f = [](double y) { return y; };
  p.f_inv = [](double v) { return v; };
  p.f_prime = [](double) { return 1.0; };
  p.growth_K = 2.0;
  p.growth_k = 0.1;
  p.gaussian_mean = [](double m, double) { return m; };
  p.gaussian_slope = [](double, double) { return 1.0; };
  return p;
}

/// f(y) = a + b y with b > 0.
inline PayoffSpec affine_payoff(double a, double b) {
  if (!(b > 0.0)) throw std::invalid_argument("affine payoff: slope must be > 0");
  PayoffSpec p;
  p.name = "affine";
  p.f = [=](double y) { return a + b * y; };
  p.f_inv = [=](double v) { return (v - a) / b; };
  p.f_prime = [=](double) { return b; };
  p.growth_K = 2.0 * (std::abs(a) + b);
  p.growth_k = 0.1;
  p.gaussian_mean = [=](double m, double) { return a + b * m; };
  p.gaussian_slope = [=](double, double) { return b; };
  return p;
}

/// f(y) = log(1 + e^y); range (0, inf).
inline PayoffSpec softplus_payoff() {
  PayoffSpec p;
  p.name = "softplus";
  p.f = [](double y) { return y > 35.0 ? y : std::log1p(std::exp(y)); };
  p.f_inv = [](double v) {
    if (!(v > 0.0)) throw std::domain_error("softplus payoff: value must be > 0");
    return v > 35.0 ? v : std::log(std::expm1(v));
  };
  p.f_prime = [](double y) { return 1.0 / (1.0 + std::exp(-y)); };
  p.growth_K = 3.0;
  p.growth_k = 0.1;
  return p;
}

/// f(y) = exp(a y), a > 0 (log-normal payoff).
inline PayoffSpec exponential_payoff(double a) {
  if (!(a > 0.0)) throw std::invalid_argument("exponential payoff: rate must be > 0");
  PayoffSpec p;
  p.name = "exp";
  p.f = [=](double y) { return std::exp(a * y); };
  p.f_inv = [=](double v) {
    if (!(v > 0.0)) throw std::domain_error("exponential payoff: value must be > 0");
    return std::log(v) / a;
  };
  p.f_prime = [=](double y) { return a * std::exp(a * y); };
  p.growth_k = 0.1;
  // sup_y exp(a y - k y^2 / 4) = exp(a^2 / k)
  p.growth_K = std::exp(a * a / p.growth_k);
  p.gaussian_mean = [=](double m, double sd) { return std::exp(a * m + 0.5 * a * a * sd * sd); };
  p.gaussian_slope = [=](double m, double sd) { return a * std::exp(a * m + 0.5 * a * a * sd * sd); };
  return p;
}

/// f(y) = y + c y^3, c >= 0.
inline PayoffSpec cubic_payoff(double c) {
  if (!(c >= 0.0)) throw std::invalid_argument("cubic payoff: coefficient must be >= 0");
  PayoffSpec p;
  p.name = "cubic";
  p.f = [=](double y) { return y + c * y * y * y; };
  p.f_prime = [=](double y) { return 1.0 + 3.0 * c * y * y; };
  p.f_inv = [=](double v) {
    return numerics::solve_increasing([=](double y) { return y + c * y * y * y; },
                                      [=](double y) { return 1.0 + 3.0 * c * y * y; }, v, v / (1.0 + std::abs(v)),
                                      1.0);
  };
  p.growth_k = 0.1;
  p.growth_K = 10.0 * (1.0 + c);
  p.gaussian_mean = [=](double m, double sd) { return m + c * (m * m * m + 3.0 * m * sd * sd); };
  p.gaussian_slope = [=](double m, double sd) { return 1.0 + 3.0 * c * (m * m + sd * sd); };
  return p;
}

/// Strictly increasing piecewise-linear interpolant through (y_i, f_i),
/// extended linearly with the end slopes.
inline PayoffSpec piecewise_linear_payoff(std::vector<double> ys, std::vector<double> fs) {
  if (ys.size() != fs.size() || ys.size() < 2) {
    throw std::invalid_argument("piecewise-linear payoff: need at least two (y, f) knots");
  }
  for (std::size_t i = 1; i < ys.size(); ++i) {
    if (!(ys[i] > ys[i - 1])) throw std::invalid_argument("piecewise-linear payoff: y must be strictly increasing");
    if (!(fs[i] > fs[i - 1])) throw std::invalid_argument("piecewise-linear payoff: f must be strictly increasing");
  }
  const auto segment = [](const std::vector<double>& xs, double x) {
    const auto it = std::upper_bound(xs.begin() + 1, xs.end() - 1, x);
    return static_cast<std::size_t>(it - xs.begin()) - 1;
  };
  PayoffSpec p;
  p.name = "piecewise-linear";
  p.f = [=](double y) {
    const std::size_t i = segment(ys, y);
    return fs[i] + (fs[i + 1] - fs[i]) * (y - ys[i]) / (ys[i + 1] - ys[i]);
  };
  p.f_inv = [=](double v) {
    const std::size_t i = segment(fs, v);
    return ys[i] + (ys[i + 1] - ys[i]) * (v - fs[i]) / (fs[i + 1] - fs[i]);
  };
  p.f_prime = [=](double y) {
    const std::size_t i = segment(ys, y);
    return (fs[i + 1] - fs[i]) / (ys[i + 1] - ys[i]);
  };
  // Gaussian expectations segment by segment: on [lo, hi] with f = c0 + c1 x,
  //   int (c0 + c1 x) N(x; m, s^2) dx = (c0 + c1 m)(Phi(b) - Phi(a)) + c1 s (phi(a) - phi(b)).
  const auto segment_sum = [=](double m, double sd, bool slope_only) {
    const std::size_t nseg = ys.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < nseg; ++i) {
      const double c1 = (fs[i + 1] - fs[i]) / (ys[i + 1] - ys[i]);
      const double c0 = fs[i] - c1 * ys[i];
      const double a = i == 0 ? -std::numeric_limits<double>::infinity() : (ys[i] - m) / sd;
      const double b = i + 1 == nseg ? std::numeric_limits<double>::infinity() : (ys[i + 1] - m) / sd;
      // Phi(b) - Phi(a) without cancellation in the upper tail
      const double mass = a > 0.0 ? numerics::normal_cdf(-a) - numerics::normal_cdf(-b)
                                  : numerics::normal_cdf(b) - numerics::normal_cdf(a);
      const double pa = std::isinf(a) ? 0.0 : numerics::normal_pdf(a);
      const double pb = std::isinf(b) ? 0.0 : numerics::normal_pdf(b);
      acc += slope_only ? c1 * mass : (c0 + c1 * m) * mass + c1 * sd * (pa - pb);
    }
    return acc;
  };
  p.gaussian_mean = [=](double m, double sd) { return sd > 0.0 ? segment_sum(m, sd, false) : p.f(m); };
  p.gaussian_slope = [=](double m, double sd) { return sd > 0.0 ? segment_sum(m, sd, true) : p.f_prime(m); };
  double amax = 0.0;
  for (double v : fs) amax = std::max(amax, std::abs(v));
  double smax = 0.0;
  for (std::size_t i = 0; i + 1 < ys.size(); ++i) smax = std::max(smax, (fs[i + 1] - fs[i]) / (ys[i + 1] - ys[i]));
  p.growth_K = amax + 10.0 * smax;
  p.growth_k = 0.1;
  return p;
}

/// Reads a payoff table with header `y,f` (column names are not checked
/// beyond the count) and one strictly increasing knot per line.
inline PayoffSpec load_payoff_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open payoff table " + path);
  std::string line;
  std::vector<double> ys, fs;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected two columns");
    }
    try {
      std::size_t pa = 0, pb = 0;
      const double y = std::stod(a, &pa);
      const double f = std::stod(b, &pb);
      ys.push_back(y);
      fs.push_back(f);
    } catch (const std::invalid_argument&) {
      if (header_seen || !ys.empty()) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": non-numeric value");
      }
      header_seen = true;
    }
  }
  auto spec = piecewise_linear_payoff(std::move(ys), std::move(fs));
  spec.name = "csv:" + path;
  return spec;
}

/// Parses a payoff reference: identity | affine:a,b | softplus | exp:a |
/// cubic:c | csv:<path>.
inline PayoffSpec parse_payoff(const std::string& ref) {
  const auto colon = ref.find(':');
  const std::string kind = ref.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : ref.substr(colon + 1);
  const auto numbers = [&](std::size_t want) {
    std::vector<double> out;
    std::stringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.size() != want) throw std::invalid_argument("payoff '" + ref + "': expected " + std::to_string(want) + " arguments");
    return out;
  };
  if (kind == "identity") return identity_payoff();
  if (kind == "affine") {
    const auto a = numbers(2);
    return affine_payoff(a[0], a[1]);
  }
  if (kind == "softplus") return softplus_payoff();
  if (kind == "exp") return exponential_payoff(numbers(1)[0]);
  if (kind == "cubic") return cubic_payoff(numbers(1)[0]);
  if (kind == "csv") return load_payoff_csv(args);
  throw std::invalid_argument("unknown payoff '" + ref + "'");
}

struct PayoffValidation {
  bool accepted = false;
  std::string message;
  std::optional<double> violating_point;
  double growth_constant = 0.0;  ///< sup over the grid of |f(y)| exp(-k y^2/4)
};

/// Checks strict monotonicity on [-10, 10] and the growth condition
/// |f(y)| <= K exp(k y^2/4) with 0 < k < 1/(1+2r). The growth ratio must not
/// increase towards either end of the grid; the smallest admissible K on the
/// grid is reported in `growth_constant`.
inline PayoffValidation validate_payoff(const PayoffSpec& spec, double r) {
  PayoffValidation out;
  if (!spec.f) {
    out.message = "payoff has no function";
    return out;
  }
  if (!(spec.growth_K > 0.0)) {
    out.message = "growth constant K must be > 0";
    return out;
  }
  const double k = spec.growth_k;
  if (!(k > 0.0 && k < 1.0 / (1.0 + 2.0 * r))) {
    out.message = "growth exponent k=" + std::to_string(k) + " must lie in (0, 1/(1+2r))";
    return out;
  }
  // Wide enough that exp(a y) with a up to ~1 peaks inside the grid.
  constexpr int kPoints = 4001;
  constexpr double kHalfWidth = 20.0;
  const auto point = [](int i) { return -kHalfWidth + 2.0 * kHalfWidth * i / (kPoints - 1); };
  std::vector<double> vals(kPoints), ratio(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    const double y = point(i);
    vals[i] = spec.f(y);
    if (!std::isfinite(vals[i])) {
      out.message = "f is not finite";
      out.violating_point = y;
      return out;
    }
    ratio[i] = std::abs(vals[i]) * std::exp(-k * y * y / 4.0);
    out.growth_constant = std::max(out.growth_constant, ratio[i]);
  }
  // Growth: on the outer tenth of the grid the ratio |f| e^{-k y^2/4} must be
  // non-increasing moving outwards.
  constexpr int kTail = kPoints / 10;
  for (int i = kPoints - kTail; i < kPoints; ++i) {
    if (ratio[i] > ratio[i - 1] * (1.0 + 1e-12) && ratio[i] > 1e-300) {
      out.message = "growth bound violated: |f| exp(-k y^2/4) increases in the right tail";
      out.violating_point = point(i);
      return out;
    }
  }
  for (int i = kTail - 1; i >= 0; --i) {
    if (ratio[i] > ratio[i + 1] * (1.0 + 1e-12) && ratio[i] > 1e-300) {
      out.message = "growth bound violated: |f| exp(-k y^2/4) increases in the left tail";
      out.violating_point = point(i);
      return out;
    }
  }
  for (int i = 1; i < kPoints; ++i) {
    if (!(vals[i] > vals[i - 1])) {
      out.message = "f is not strictly increasing";
      out.violating_point = point(i);
      return out;
    }
  }
  out.accepted = true;
  out.message = "ok";
  return out;
}

}  // namespace kyleback
