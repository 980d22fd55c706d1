#pragma once

// Equilibrium for a payoff Gamma = f(eta), eta standard normal. The market
// maker's signal is the OU process run on the clock V(t), the price is
// h*(t,y) = E f(Z) with Z ~ N(y k(t), e^{-2rt}), k(t) = sqrt(1 + 2r e^{-2rt}),
// and the insider drives Y to f^{-1}(Gamma) along an OU bridge.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kyleback/equilibrium_run.hpp"
#include "kyleback/numerics.hpp"
#include "kyleback/ou_core.hpp"
#include "kyleback/payoff.hpp"
#include "kyleback/rng.hpp"
#include "kyleback/sde_engine.hpp"

namespace kyleback {

struct GeneralMarket {
  double r = 1.0;
  TimeChange tc = TimeChange::equilibrium(1.0);
  PayoffSpec payoff = identity_payoff();

  GeneralMarket() = default;
  GeneralMarket(double rate, PayoffSpec f) : r(rate), tc(TimeChange::equilibrium(rate)), payoff(std::move(f)) {}

  void validate() const {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("GeneralMarket: r must be finite and > 0");
    if (tc.r != r || tc.c_sq != 2.0 * r) throw std::invalid_argument("GeneralMarket: the clock must have C^2 = 2r");
    if (!payoff.f) throw std::invalid_argument("GeneralMarket: payoff has no function");
  }
};

struct QuadratureCfg {
  std::size_t n_nodes = 64;
  double variance_floor = 1e-12;
  double rel_tol = 1e-10;
  std::size_t max_nodes = 512;

  void validate() const {
    if (n_nodes < 16) throw std::invalid_argument("QuadratureCfg: n_nodes must be >= 16");
    if (!(variance_floor > 0.0)) throw std::invalid_argument("QuadratureCfg: variance_floor must be > 0");
    if (max_nodes < n_nodes || max_nodes > 512) throw std::invalid_argument("QuadratureCfg: max_nodes in [n_nodes, 512]");
  }
};

// ---------------------------------------------------------------------------
// Deterministic coefficients

/// k(t) = sqrt(1 + 2r e^{-2rt}).
inline double price_stretch(double t, double r) { return std::sqrt(1.0 + 2.0 * r * std::exp(-2.0 * r * t)); }

/// a(t) = 1/2 log(1 + 2r e^{-2rt}) = r (V(inf) - V(t)).
inline double bridge_angle(double t, double r) { return 0.5 * std::log1p(2.0 * r * std::exp(-2.0 * r * t)); }

inline double sigma_star(double t, const GeneralMarket& m) { return std::sqrt(sigma_sq(t, m.tc)); }

/// Var(Y*_t) in the market's filtration: (e^{2rV(t)} - 1)/(2r), which with
/// C^2 = 2r is (1 - e^{-2rt})/(1 + 2r e^{-2rt}).
inline double signal_variance(double t, double r) {
  const double e = std::exp(-2.0 * r * t);
  return -std::expm1(-2.0 * r * t) / (1.0 + 2.0 * r * e);
}

/// E[lambda*_t] = k(t) E[f'(eta)], exact at every t.
inline double lambda_mean_general(double t, double limit, double r) { return price_stretch(t, r) * limit; }

/// sigma'/(sigma (1 - sigma)(1 + sigma)) + r for sigma^2 = C^2 e^{-2rt}/(1 + C^2 e^{-2rt});
/// zero for every C.
inline double sigma_ode_residual(double t, const TimeChange& tc) {
  const double e = tc.c_sq * std::exp(-2.0 * tc.r * t);
  const double s2 = e / (1.0 + e);
  const double s = std::sqrt(s2);
  const double ds = -tc.r * e / ((1.0 + e) * (1.0 + e) * s);
  return ds / (s * (1.0 - s) * (1.0 + s)) + tc.r;
}

// ---------------------------------------------------------------------------
// Gaussian expectations of the payoff

namespace detail {

/// E[g(mean + sd Z)] by Gauss-Hermite, doubling the node count from
/// cfg.n_nodes until successive values agree to cfg.rel_tol.
template <class G>
double adaptive_gaussian_mean(G&& g, double mean, double variance, const QuadratureCfg& cfg) {
  if (variance < cfg.variance_floor) return g(mean);
  const double sd = std::sqrt(variance);
  std::size_t n = cfg.n_nodes;
  double prev = numerics::gaussian_expectation(g, mean, sd, n);
  while (n * 2 <= cfg.max_nodes) {
    n *= 2;
    const double cur = numerics::gaussian_expectation(g, mean, sd, n);
    if (std::abs(cur - prev) <= cfg.rel_tol * std::max(std::abs(cur), 1e-300)) return cur;
    prev = cur;
  }
  return prev;
}

inline double payoff_slope(const PayoffSpec& f, double y) {
  if (f.f_prime) return f.f_prime(y);
  return numerics::central_d1(f.f, y, 1e-4 * std::max(1.0, std::abs(y)));
}

inline double payoff_inverse(const PayoffSpec& f, double v) {
  if (f.f_inv) return f.f_inv(v);
  return numerics::solve_increasing(f.f, [&](double y) { return payoff_slope(f, y); }, v, 0.0, 1.0);
}

}  // namespace detail

/// Fixed-cost evaluator used inside simulations and finite-difference
/// residuals: closed-form hooks when the payoff has them, otherwise a
/// Gauss-Hermite rule with a fixed node count (so nearby evaluations share
/// the same discretisation).
class FastPricer {
 public:
  FastPricer(const GeneralMarket& m, std::size_t nodes) : m_(m), nodes_(nodes) {}

  double mean(double center, double sd) const {
    if (m_.payoff.gaussian_mean) return m_.payoff.gaussian_mean(center, sd);
    if (sd <= 0.0) return m_.payoff.f(center);
    return numerics::gaussian_expectation(m_.payoff.f, center, sd, nodes_);
  }
  double slope(double center, double sd) const {
    if (m_.payoff.gaussian_slope) return m_.payoff.gaussian_slope(center, sd);
    if (sd <= 0.0) return detail::payoff_slope(m_.payoff, center);
    return numerics::gaussian_expectation([&](double y) { return detail::payoff_slope(m_.payoff, y); }, center, sd,
                                          nodes_);
  }
  double h(double t, double y) const {
    return mean(y * price_stretch(t, m_.r), std::exp(-m_.r * t));
  }
  double h_y(double t, double y) const {
    const double k = price_stretch(t, m_.r);
    return k * slope(y * k, std::exp(-m_.r * t));
  }
  double h_inv(double t, double v) const {
    const double k = price_stretch(t, m_.r);
    double guess = 0.0;
    try {
      guess = detail::payoff_inverse(m_.payoff, v) / k;
    } catch (const std::domain_error&) {
    }
    return numerics::solve_increasing([&](double y) { return h(t, y); }, [&](double y) { return h_y(t, y); }, v,
                                      guess, 0.05);
  }

 private:
  const GeneralMarket& m_;
  std::size_t nodes_;
};

/// h*(t,y) = E[f(Z)], Z ~ N(y k(t), e^{-2rt}).
inline double pricing_h(double t, double y, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  if (t < 0.0) throw std::domain_error("pricing_h: t must be >= 0");
  return detail::adaptive_gaussian_mean(m.payoff.f, y * price_stretch(t, m.r), std::exp(-2.0 * m.r * t), cfg);
}

/// Central-difference variant of pricing_h_deriv with a fixed node count,
/// kept for cross-checking the f' quadrature.
inline double pricing_h_deriv_fd(double t, double y, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  const std::size_t n = cfg.max_nodes;
  const double k = price_stretch(t, m.r);
  const double sd = std::exp(-m.r * t);
  const auto h = [&](double x) {
    return sd * sd < cfg.variance_floor ? m.payoff.f(x * k) : numerics::gaussian_expectation(m.payoff.f, x * k, sd, n);
  };
  return numerics::central_d1(h, y, 1e-3);
}

/// h*_y(t,y) = k(t) E[f'(Z)], or a central difference of h* (fixed node
/// count) when f' is not supplied.
inline double pricing_h_deriv(double t, double y, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  if (t < 0.0) throw std::domain_error("pricing_h_deriv: t must be >= 0");
  const double k = price_stretch(t, m.r);
  if (m.payoff.f_prime) {
    return k * detail::adaptive_gaussian_mean(m.payoff.f_prime, y * k, std::exp(-2.0 * m.r * t), cfg);
  }
  return pricing_h_deriv_fd(t, y, m, cfg);
}

/// Level y with h*(t,y) = v.
inline double pricing_h_inv(double t, double v, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  const double k = price_stretch(t, m.r);
  double guess = 0.0;
  try {
    guess = detail::payoff_inverse(m.payoff, v) / k;
  } catch (const std::exception&) {
  }
  try {
    numerics::RootOptions opt;
    opt.x_tol = 1e-13;
    return numerics::solve_increasing([&](double y) { return pricing_h(t, y, m, cfg); },
                                      [&](double y) { return pricing_h_deriv(t, y, m, cfg); }, v, guess, 0.05, opt);
  } catch (const std::domain_error&) {
    throw std::domain_error("pricing_h_inv: price " + std::to_string(v) + " is outside the range of h*(" +
                            std::to_string(t) + ", .)");
  }
}

// ---------------------------------------------------------------------------
// Bridge and insider strategy

/// dt-coefficient of Y under P^v with pin z = f^{-1}(v):
///   r sigma^2(t) (z - y cosh a(t)) / sinh a(t).
inline double bridge_drift_pinned(double t, double y, double z, double r) {
  const double a = bridge_angle(t, r);
  const double e = 2.0 * r * std::exp(-2.0 * r * t);
  const double s2 = e / (1.0 + e);
  return r * s2 * (z - y * std::cosh(a)) / std::sinh(a);
}

inline double bridge_drift(double t, double y, double v, const GeneralMarket& m) {
  return bridge_drift_pinned(t, y, detail::payoff_inverse(m.payoff, v), m.r);
}

/// alpha*(t) = r sigma(t) ((z - y cosh a)/sinh a - y).
inline double insider_rate_pinned(double t, double y, double z, double r) {
  const double a = bridge_angle(t, r);
  const double e = 2.0 * r * std::exp(-2.0 * r * t);
  const double s = std::sqrt(e / (1.0 + e));
  return r * s * ((z - y * std::cosh(a)) / std::sinh(a) - y);
}

inline double insider_rate_general(double t, double y, double v, const GeneralMarket& m) {
  return insider_rate_pinned(t, y, detail::payoff_inverse(m.payoff, v), m.r);
}

/// E[f'(eta)] for eta standard normal: the limit of E[lambda*_t].
inline double lambda_limit(const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  if (m.payoff.gaussian_slope) return m.payoff.gaussian_slope(0.0, 1.0);
  return detail::adaptive_gaussian_mean([&](double y) { return detail::payoff_slope(m.payoff, y); }, 0.0, 1.0, cfg);
}

// ---------------------------------------------------------------------------
// Value function

/// Tail part 1/2 e^{rt} int_t^inf e^{-rs} sigma(s) h_y(s, h^{-1}(s,v)) ds,
/// truncated at S = t + log(1e8)/r.
inline double value_J_tail(double t, double v, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  const FastPricer px(m, cfg.n_nodes);
  const double span = std::log(1e8) / m.r;
  const auto integrand = [&](double s) {
    return std::exp(-m.r * (s - t)) * sigma_star(s, m) * px.h_y(s, px.h_inv(s, v));
  };
  const auto panels = static_cast<std::size_t>(std::ceil(span * m.r * 2.0));
  return 0.5 * numerics::integrate_gl(integrand, t, t + span, panels, 16);
}

/// J(t,y) = int_{h^{-1}(t,v)}^y (h(t,x) - v)/sigma(t) dx + tail(t).
inline double value_J_general(double t, double y, double v, const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  m.validate();
  if (t < 0.0) throw std::domain_error("value_J_general: t must be >= 0");
  const FastPricer px(m, cfg.n_nodes);
  const double y_v = px.h_inv(t, v);
  const auto panels = 1 + static_cast<std::size_t>(std::ceil(std::abs(y - y_v) / 0.5));
  const double first =
      numerics::integrate_gl([&](double x) { return px.h(t, x) - v; }, y_v, y, panels, 16) / sigma_star(t, m);
  return first + value_J_tail(t, v, m, cfg);
}

// ---------------------------------------------------------------------------
// PDE residuals

/// h_t + 1/2 a^2 sigma^2 h_yy + sigma^2 phi h_y at one point.
inline double ghrule_residual(double h_t, double h_y, double h_yy, double a, double phi, double sig_sq) {
  return h_t + 0.5 * a * a * sig_sq * h_yy + sig_sq * phi * h_y;
}

/// 1/2 a sigma^2 a'' + phi sigma^2 a'/a - sigma^2 phi' + sigma'/sigma + r at one
/// point. With sigma = 1 it equals the time-homogeneous residual divided by a.
inline double gphia_residual(double a, double da, double d2a, double phi, double dphi, double sigma, double dsigma,
                             double r) {
  const double s2 = sigma * sigma;
  return 0.5 * a * s2 * d2a + phi * s2 * da / a - s2 * dphi + dsigma / sigma + r;
}

/// h_t + 1/2 sigma^2 h_yy + sigma^2 r y h_y on the product grid ts x ys
/// (row-major by t), derivatives by fourth-order central differences with
/// step 1e-3 on a fixed-node quadrature.
inline std::vector<double> pde_residual_h(std::span<const double> ts, std::span<const double> ys,
                                          const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  m.validate();
  const FastPricer px(m, cfg.max_nodes);
  constexpr double step = 1e-3;
  std::vector<double> out;
  out.reserve(ts.size() * ys.size());
  for (double t : ts) {
    if (!(t > 2.0 * step)) throw std::domain_error("pde_residual_h: grid times must be interior (t > 2e-3)");
    const double s2 = sigma_sq(t, m.tc);
    for (double y : ys) {
      const double ht = numerics::central_d1([&](double u) { return px.h(u, y); }, t, step);
      const double hy = numerics::central_d1([&](double x) { return px.h(t, x); }, y, step);
      const double hyy = numerics::central_d2([&](double x) { return px.h(t, x); }, y, step);
      out.push_back(ghrule_residual(ht, hy, hyy, 1.0, m.r * y, s2));
    }
  }
  return out;
}

/// J_t + 1/2 sigma^2 J_yy + sigma^2 r y J_y - r J on the grid ts x ys.
inline std::vector<double> pde_residual_J(std::span<const double> ts, std::span<const double> ys, double v,
                                          const GeneralMarket& m, const QuadratureCfg& cfg = {}) {
  m.validate();
  constexpr double step = 1e-3;
  std::vector<double> out;
  out.reserve(ts.size() * ys.size());
  for (double t : ts) {
    if (!(t > 2.0 * step)) throw std::domain_error("pde_residual_J: grid times must be interior (t > 2e-3)");
    const double s2 = sigma_sq(t, m.tc);
    for (double y : ys) {
      const auto J = [&](double u, double x) { return value_J_general(u, x, v, m, cfg); };
      const double jt = numerics::central_d1([&](double u) { return J(u, y); }, t, step);
      const double jy = numerics::central_d1([&](double x) { return J(t, x); }, y, step);
      const double jyy = numerics::central_d2([&](double x) { return J(t, x); }, y, step);
      out.push_back(jt + 0.5 * s2 * jyy + s2 * m.r * y * jy - m.r * J(t, y));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

namespace detail {

inline double payoff_draw(const NoiseStream& stream) { return stream.normal(Channel::payoff, 0); }

}  // namespace detail

/// Euler scheme for the equilibrium signal with Y_0 = 0:
///   dX = dB + c alpha*(t) dt,   dY = sigma(t) dX + r sigma^2(t) Y dt.
/// With c = 1 this is the bridge SDE pinned at f^{-1}(Gamma). `fixed_value`
/// conditions every path on Gamma = v; otherwise eta ~ N(0,1) is drawn per
/// path and Gamma = f(eta). P, lambda and profits use FastPricer with
/// cfg_q.n_nodes nodes when the payoff has no closed-form hooks.
inline EquilibriumRun simulate_bridge(std::optional<double> fixed_value, const GeneralMarket& market,
                                      const SimulationConfig& cfg, const QuadratureCfg& cfg_q = {}) {
  market.validate();
  if (cfg.n_paths == 0) throw std::invalid_argument("simulate_bridge: n_paths must be >= 1");
  const double r = market.r;
  const FastPricer px(market, cfg_q.n_nodes);

  EquilibriumRun run;
  run.grid = cfg.grid();
  run.checkpoints = cfg.checkpoints;
  const auto cp_idx = checkpoint_indices(run.grid, run.checkpoints);
  run.n_paths = cfg.n_paths;
  run.seed = cfg.seed;
  run.strategy_scale = cfg.strategy_scale;
  run.y0 = 0.0;

  const std::size_t n = cfg.n_paths;
  const std::size_t ncp = cp_idx.size();
  run.gamma.assign(n, 0.0);
  run.pin.assign(n, 0.0);
  run.diverged.assign(n, 0);
  for (auto* f : {&run.Y, &run.X, &run.P, &run.lambda, &run.qv_X}) f->assign(ncp * n, 0.0);
  run.profit_discounted.assign(n, 0.0);
  run.profit_stopped.assign(n, 0.0);
  if (cfg.announcement) {
    run.tau.assign(n, 0.0);
    run.int_P_to_tau.assign(ncp * n, 0.0);
    run.pre_jump_price.assign(n, 0.0);
    run.pre_jump_log_gap.assign(n, 0.0);
  }

  const TimeGrid grid = run.grid;
  const double dt = grid.dt;
  const double sq = std::sqrt(dt);
  // Per-step deterministic coefficients.
  std::vector<double> sig(grid.n_steps + 1), sig2(grid.n_steps + 1), ch(grid.n_steps + 1), shinv(grid.n_steps + 1),
      disc(grid.n_steps + 1);
  for (std::size_t j = 0; j <= grid.n_steps; ++j) {
    const double t = grid.time(j);
    const double a = bridge_angle(t, r);
    sig2[j] = sigma_sq(t, market.tc);
    sig[j] = std::sqrt(sig2[j]);
    ch[j] = std::cosh(a);
    shinv[j] = 1.0 / std::sinh(a);
    disc[j] = std::exp(-r * t);
  }
  std::optional<double> fixed_pin;
  if (fixed_value) fixed_pin = detail::payoff_inverse(market.payoff, *fixed_value);

  parallel_for_paths(
      n,
      [&](std::size_t i) {
        const NoiseStream stream(cfg.seed, i);
        double gamma, z;
        if (fixed_value) {
          gamma = *fixed_value;
          z = *fixed_pin;
        } else {
          z = detail::payoff_draw(stream);
          gamma = market.payoff.f(z);
        }
        run.gamma[i] = gamma;
        run.pin[i] = z;
        const double tau = cfg.announcement ? stream.exponential(Channel::horizon, 0, r)
                                            : std::numeric_limits<double>::infinity();
        if (cfg.announcement) {
          run.tau[i] = tau;
          run.pre_jump_price[i] = std::numeric_limits<double>::quiet_NaN();
          run.pre_jump_log_gap[i] = std::numeric_limits<double>::quiet_NaN();
        }
        NormalSequence dw(stream, Channel::brownian);
        double y = 0.0, x = 0.0, qv = 0.0, prof_disc = 0.0, prof_stop = 0.0, int_p = 0.0;
        std::size_t next_cp = 0;
        const auto record = [&](std::size_t step, double price) {
          while (next_cp < ncp && cp_idx[next_cp] == step) {
            const std::size_t o = next_cp * n + i;
            run.Y[o] = y;
            run.X[o] = x;
            run.P[o] = price;
            run.lambda[o] = px.h_y(grid.time(step), y);
            run.qv_X[o] = qv;
            if (cfg.announcement) run.int_P_to_tau[o] = int_p;
            ++next_cp;
          }
        };
        for (std::size_t j = 0; j < grid.n_steps; ++j) {
          const double t = grid.time(j);
          const double price = px.h(t, y);
          record(j, price);
          const double alpha = cfg.strategy_scale * r * sig[j] * ((z - y * ch[j]) * shinv[j] - y);
          const double gap = gamma - price;
          prof_disc += disc[j] * gap * alpha * dt;
          if (t < tau) {
            const double upto = std::min(dt, tau - t);
            prof_stop += gap * alpha * upto;
            int_p += price * upto;
            if (cfg.announcement && tau < grid.time(j + 1)) {
              run.pre_jump_price[i] = price;
              run.pre_jump_log_gap[i] = std::log(std::abs(gap));
            }
          }
          const double dx = alpha * dt + sq * dw.next();
          const double y_next = y + sig[j] * dx + r * sig2[j] * y * dt;
          if (!std::isfinite(y_next)) {
            run.diverged[i] = 1;
            break;
          }
          x += dx;
          qv += dx * dx;
          y = y_next;
        }
        if (!run.diverged[i]) record(grid.n_steps, px.h(grid.t_end(), y));
        run.profit_discounted[i] = prof_disc;
        run.profit_stopped[i] = prof_stop;
      },
      cfg.threads);

  for (std::size_t i = 0; i < n; ++i) run.n_diverged += run.diverged[i];
  if (run.divergence_fraction() > cfg.divergence_budget) {
    throw divergence_error("simulate_bridge: " + std::to_string(run.n_diverged) + " of " + std::to_string(n) +
                               " paths diverged",
                           grid.n_steps);
  }
  return run;
}

struct BridgeSample {
  std::vector<double> times;
  std::size_t n_paths = 0;
  std::vector<double> Y;    ///< [time][path]
  std::vector<double> pin;  ///< per path

  std::vector<double> column(std::size_t ti) const {
    return {Y.begin() + static_cast<std::ptrdiff_t>(ti * n_paths),
            Y.begin() + static_cast<std::ptrdiff_t>((ti + 1) * n_paths)};
  }
};

/// Exact draw of Y at the given increasing times under P^v (or the mixture
/// over eta when fixed_value is empty): R_u = Y_{V^{-1}(u)} is the OU process
/// dR = dW + r R du from 0, pinned at z = f^{-1}(Gamma) at u = V(inf), and is
/// sampled from its Gaussian bridge transitions.
inline BridgeSample sample_bridge_exact(std::optional<double> fixed_value, const GeneralMarket& market,
                                        std::span<const double> times, std::size_t n_paths, std::uint64_t seed,
                                        unsigned threads = 0) {
  market.validate();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0 || (i > 0 && !(times[i] > times[i - 1]))) {
      throw std::invalid_argument("sample_bridge_exact: times must be >= 0 and strictly increasing");
    }
  }
  const double r = market.r;
  const double u_end = market.tc.v_inf();
  std::vector<double> us(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) us[i] = time_change_V(times[i], market.tc);
  std::optional<double> fixed_pin;
  if (fixed_value) fixed_pin = detail::payoff_inverse(market.payoff, *fixed_value);

  BridgeSample out;
  out.times.assign(times.begin(), times.end());
  out.n_paths = n_paths;
  out.Y.assign(times.size() * n_paths, 0.0);
  out.pin.assign(n_paths, 0.0);
  const auto cov = [r](double du) { return std::expm1(2.0 * r * du) / (2.0 * r); };
  parallel_for_paths(
      n_paths,
      [&](std::size_t i) {
        const NoiseStream stream(seed, i);
        const double z = fixed_pin ? *fixed_pin : detail::payoff_draw(stream);
        out.pin[i] = z;
        double u = 0.0, x = 0.0;
        for (std::size_t k = 0; k < us.size(); ++k) {
          const double un = us[k];
          if (un >= u_end || std::isinf(times[k])) {
            x = z;
          } else if (un > u) {
            const double d1 = un - u;
            const double d2 = u_end - un;
            const double s1 = cov(d1);
            const double s2 = cov(d2);
            const double g2 = std::exp(r * d2);
            const double prec = 1.0 / s1 + g2 * g2 / s2;
            const double mean = (x * std::exp(r * d1) / s1 + z * g2 / s2) / prec;
            x = mean + std::sqrt(1.0 / prec) * stream.normal(Channel::exact, k);
          }
          u = un;
          out.Y[k * n_paths + i] = x;
        }
      },
      threads);
  return out;
}

/// Monte Carlo insider profit for Gamma = v under the configured strategy scale.
inline ProfitEstimate expected_profit_mc(const GeneralMarket& market, double v, const SimulationConfig& cfg,
                                         const QuadratureCfg& cfg_q = {}) {
  if (cfg.strategy_scale == 0.0) return {0.0, 0.0, 0.0, 0.0, cfg.n_paths};
  auto c = cfg;
  c.announcement = true;
  return summarize_profit(simulate_bridge(v, market, c, cfg_q));
}

}  // namespace kyleback
