#pragma once

// Equilibrium for a payoff Gamma in {0,1}: the price is the scale function
// of an OU signal Y, the insider pushes Y to +inf or -inf through the
// h-transform drift, and the value function is an integral of s.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kyleback/equilibrium_run.hpp"
#include "kyleback/numerics.hpp"
#include "kyleback/ou_core.hpp"
#include "kyleback/rng.hpp"
#include "kyleback/sde_engine.hpp"

namespace kyleback {

struct BernoulliMarket {
  double p = 0.5;  ///< P(Gamma = 1)
  OUParams params;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("BernoulliMarket: p must lie in (0,1)");
    params.validate();
  }
};

// ---------------------------------------------------------------------------

inline double initial_y(const BernoulliMarket& m) {
  m.validate();
  return scale_s_inv(m.p, m.params);
}

/// Insider trading rate: s'/s when Gamma = 1, -s'/(1-s) when Gamma = 0.
inline double insider_rate(int v, double y, const OUParams& p) {
  const auto h = hazard_pair(y, p);
  return v == 1 ? h.up : -h.down;
}

inline double equilibrium_drift(int v, double y, const OUParams& p) {
  return p.r * y + p.d + insider_rate(v, y, p);
}

/// Market depth reciprocal lambda(P) = s_0'(s_0^{-1}(P)); independent of d.
inline double kyle_lambda(double price, double r) {
  if (!(price >= 0.0 && price <= 1.0)) throw std::domain_error("kyle_lambda: price must lie in [0,1]");
  if (price == 0.0 || price == 1.0) return 0.0;
  const double z = numerics::normal_quantile(price);
  return std::sqrt(2.0 * r) * numerics::normal_pdf(z);
}

/// Insider value function
///   v = 1:  J(x) = int_x^inf (1 - s(y)) dy
///   v = 0:  J(x) = int_{-inf}^x s(y) dy
/// by Gauss-Legendre panels in the standardised variable, truncated where the
/// Gaussian tail drops below 1e-33.
inline double value_J(double x, int v, const OUParams& p) {
  if (v != 0 && v != 1) throw std::invalid_argument("value_J: v must be 0 or 1");
  const double k = std::sqrt(2.0 * p.r);
  double z0 = scale_argument(x, p);
  if (v == 0) z0 = -z0;  // int_{-inf}^{z0} Phi(z) dz = int_{-z0}^inf Phi(-z) dz
  if (z0 > 38.0) return 0.0;
  const double z_hi = std::max(z0, 0.0) + 12.0;
  const auto panels = static_cast<std::size_t>(std::ceil((z_hi - z0) / 0.5));
  const double integral = numerics::integrate_gl([](double z) { return numerics::normal_cdf(-z); }, z0, z_hi,
                                                 std::max<std::size_t>(panels, 1), 20);
  return integral / k;
}

struct JResidual {
  std::vector<double> generator;    ///< 1/2 J'' + (rx + d) J' - r J
  std::vector<double> conditioned;  ///< same with the insider's drift added
};

inline JResidual ode_residual_J(std::span<const double> grid, int v, const OUParams& p) {
  JResidual out;
  out.generator.reserve(grid.size());
  out.conditioned.reserve(grid.size());
  for (double x : grid) {
    const double s = scale_s(x, p);
    const double j1 = s - v;
    const double j2 = scale_s_deriv(x, p);
    const double base = 0.5 * j2 + (p.r * x + p.d) * j1 - p.r * value_J(x, v, p);
    out.generator.push_back(base);
    out.conditioned.push_back(base + insider_rate(v, x, p) * j1);
  }
  return out;
}

/// E[s_0'(Y_t)] with Y_t ~ N(y e^{rt}, (e^{2rt}-1)/(2r)), y = s_0^{-1}(p):
/// a Gaussian integral of a Gaussian, sqrt(r/pi) / sqrt(1+2rv) exp(-r m^2/(1+2rv)).
inline double lambda_mean_closed_form(double t, const BernoulliMarket& m) {
  m.validate();
  const OUParams canon{m.params.r, 0.0};
  const double r = canon.r;
  const double y = scale_s_inv(m.p, canon);
  const double mean = y * std::exp(r * t);
  const double var = ou_variance(t, r);
  const double q = 1.0 + 2.0 * r * var;
  return std::sqrt(r / std::numbers::pi) / std::sqrt(q) * std::exp(-r * mean * mean / q);
}

namespace detail {

struct ScaleState {
  double s;
  double one_minus_s;
  double up;    // s'/s
  double down;  // s'/(1-s)
};

inline ScaleState scale_state(double y, const OUParams& p, double k) {
  const double u = y + p.shift();
  const double z = k * u;
  if (std::abs(u) <= 6.0) {
    const double sp = std::sqrt(p.r / std::numbers::pi) * std::exp(-p.r * u * u);
    double s, q;
    if (z < 0.0) {
      s = numerics::normal_cdf(z);
      q = 1.0 - s;
    } else {
      q = numerics::normal_cdf(-z);
      s = 1.0 - q;
    }
    return {s, q, sp / s, sp / q};
  }
  const double s = numerics::normal_cdf(z);
  const double q = numerics::normal_cdf(-z);
  return {s, q, k * numerics::normal_hazard_lower(z), k * numerics::normal_hazard_lower(-z)};
}

}  // namespace detail

/// Simulates the equilibrium signal
///   dY = dB + (rY + d + c alpha*(Gamma, Y)) dt,   Y_0 = s^{-1}(p),
/// with P = s(Y), X = Y - y0 - int (rY + d) dt and, optionally, an
/// independent exponential announcement time per path. `fixed_payoff`
/// conditions every path on Gamma = v; otherwise Gamma is a per-path coin
/// with probability p.
inline EquilibriumRun simulate_equilibrium(const BernoulliMarket& market, std::optional<int> fixed_payoff,
                                           const SimulationConfig& cfg) {
  market.validate();
  if (fixed_payoff && *fixed_payoff != 0 && *fixed_payoff != 1) {
    throw std::invalid_argument("simulate_equilibrium: payoff must be 0 or 1");
  }
  if (cfg.n_paths == 0) throw std::invalid_argument("simulate_equilibrium: n_paths must be >= 1");
  const OUParams& prm = market.params;
  const double r = prm.r;
  const double k = std::sqrt(2.0 * r);

  EquilibriumRun run;
  run.grid = cfg.grid();
  run.checkpoints = cfg.checkpoints;
  const auto cp_idx = checkpoint_indices(run.grid, run.checkpoints);
  run.n_paths = cfg.n_paths;
  run.seed = cfg.seed;
  run.strategy_scale = cfg.strategy_scale;
  run.y0 = initial_y(market);

  const std::size_t n = cfg.n_paths;
  const std::size_t ncp = cp_idx.size();
  run.gamma.assign(n, 0.0);
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
  std::vector<double> discount(grid.n_steps);
  for (std::size_t j = 0; j < grid.n_steps; ++j) discount[j] = std::exp(-r * grid.time(j));

  parallel_for_paths(
      n,
      [&](std::size_t i) {
        const NoiseStream stream(cfg.seed, i);
        const int v = fixed_payoff ? *fixed_payoff : (stream.uniform(Channel::payoff, 0) < market.p ? 1 : 0);
        run.gamma[i] = v;
        const double tau = cfg.announcement ? stream.exponential(Channel::horizon, 0, r)
                                            : std::numeric_limits<double>::infinity();
        if (cfg.announcement) {
          run.tau[i] = tau;
          run.pre_jump_price[i] = std::numeric_limits<double>::quiet_NaN();
          run.pre_jump_log_gap[i] = std::numeric_limits<double>::quiet_NaN();
        }
        NormalSequence z(stream, Channel::brownian);
        double y = run.y0;
        double x = 0.0;
        double qv = 0.0;
        double prof_disc = 0.0;
        double prof_stop = 0.0;
        double int_p = 0.0;
        std::size_t next_cp = 0;
        const auto record = [&](std::size_t step, double price) {
          while (next_cp < ncp && cp_idx[next_cp] == step) {
            const std::size_t o = next_cp * n + i;
            run.Y[o] = y;
            run.X[o] = x;
            run.P[o] = price;
            run.lambda[o] = std::sqrt(r / std::numbers::pi) * std::exp(-r * (y + prm.shift()) * (y + prm.shift()));
            run.qv_X[o] = qv;
            if (cfg.announcement) run.int_P_to_tau[o] = int_p;
            ++next_cp;
          }
        };
        for (std::size_t j = 0; j < grid.n_steps; ++j) {
          const double t = grid.time(j);
          const auto st = detail::scale_state(y, prm, k);
          record(j, st.s);
          const double alpha = cfg.strategy_scale * (v == 1 ? st.up : -st.down);
          const double gap = v == 1 ? st.one_minus_s : -st.s;  // Gamma - P
          prof_disc += discount[j] * gap * alpha * dt;
          if (t < tau) {
            const double upto = std::min(dt, tau - t);
            prof_stop += gap * alpha * upto;
            int_p += st.s * upto;
            if (cfg.announcement && tau < grid.time(j + 1)) {
              run.pre_jump_price[i] = st.s;
              // 1 - s = Phi(-z) and s = Phi(z)
              const double z = k * (y + prm.shift());
              run.pre_jump_log_gap[i] = numerics::log_normal_cdf(v == 1 ? -z : z);
            }
          }
          const double mm_drift = r * y + prm.d;
          const double dy = (mm_drift + alpha) * dt + sq * z.next();
          const double y_next = y + dy;
          if (!std::isfinite(y_next)) {
            run.diverged[i] = 1;
            break;
          }
          const double dx = dy - mm_drift * dt;
          x += dx;
          qv += dx * dx;
          y = y_next;
        }
        if (!run.diverged[i]) record(grid.n_steps, detail::scale_state(y, prm, k).s);
        run.profit_discounted[i] = prof_disc;
        run.profit_stopped[i] = prof_stop;
      },
      cfg.threads);

  for (std::size_t i = 0; i < n; ++i) run.n_diverged += run.diverged[i];
  if (run.divergence_fraction() > cfg.divergence_budget) {
    throw divergence_error("simulate_equilibrium: " + std::to_string(run.n_diverged) + " of " + std::to_string(n) +
                               " paths diverged",
                           grid.n_steps);
  }
  return run;
}

/// Monte Carlo insider profit for Gamma = v under the configured strategy
/// scale: discounted over [0,T] and, separately, undiscounted up to tau ^ T.
inline ProfitEstimate expected_profit_mc(const BernoulliMarket& market, int v, const SimulationConfig& cfg) {
  if (cfg.strategy_scale == 0.0) {
    return {0.0, 0.0, 0.0, 0.0, cfg.n_paths};
  }
  auto c = cfg;
  c.announcement = true;
  return summarize_profit(simulate_equilibrium(market, v, c));
}

}  // namespace kyleback
