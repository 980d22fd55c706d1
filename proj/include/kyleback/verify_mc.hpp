#pragma once

// Statistical checks on simulated bundles: martingale and supermartingale
// bands, Kolmogorov-Smirnov tests, calibration of prices against payoffs,
// profit comparisons and the announcement-time layer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kyleback/bernoulli_equilibrium.hpp"
#include "kyleback/equilibrium_run.hpp"
#include "kyleback/general_equilibrium.hpp"
#include "kyleback/numerics.hpp"
#include "kyleback/sde_engine.hpp"

namespace kyleback {

struct StatReport {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::size_t n_paths = 0;
  std::vector<double> checkpoints;
  std::vector<std::string> flags;
};

/// How wide a moment band is: z standard errors, raised to the Bonferroni
/// value for m simultaneous comparisons when `bonferroni` is set.
struct BandPolicy {
  double z = 3.0;
  bool bonferroni = true;
  double family_alpha = 0.0027;  ///< two-sided level of a single 3-SE band

  double width(std::size_t comparisons) const;
};

/// z with two-sided tail family_alpha / m.
inline double bonferroni_band(std::size_t comparisons, double family_alpha = 0.0027) {
  if (comparisons == 0) throw std::invalid_argument("bonferroni_band: need at least one comparison");
  if (!(family_alpha > 0.0 && family_alpha < 1.0)) throw std::invalid_argument("bonferroni_band: alpha in (0,1)");
  return numerics::normal_quantile(1.0 - family_alpha / (2.0 * static_cast<double>(comparisons)));
}

inline double BandPolicy::width(std::size_t comparisons) const {
  if (!bonferroni || comparisons <= 1) return z;
  return std::max(z, bonferroni_band(comparisons, family_alpha));
}

/// Literal 3-SE bands, no multiplicity correction.
inline BandPolicy plain_bands() { return BandPolicy{3.0, false, 0.0027}; }

// ---------------------------------------------------------------------------
// Kolmogorov distribution

/// P(K <= x) for the Kolmogorov limit law, using the theta-function series
/// on either side of x = 1.
inline double kolmogorov_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x < 1.0) {
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * x * x);
    double acc = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(-static_cast<double>((2 * k - 1) * (2 * k - 1)) * c);
      acc += term;
      if (term < 1e-18 * acc) break;
    }
    return std::sqrt(2.0 * std::numbers::pi) / x * acc;
  }
  double acc = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    acc += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return 1.0 - 2.0 * acc;
}

/// Asymptotic p-value of a KS distance D with effective sample size n_eff
/// (Stephens' small-sample correction).
inline double ks_pvalue(double d, double n_eff) {
  const double rn = std::sqrt(n_eff);
  return std::clamp(1.0 - kolmogorov_cdf((rn + 0.12 + 0.11 / rn) * d), 0.0, 1.0);
}

template <class Cdf>
double ks_distance(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

inline double ks_distance_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Moment tests

namespace detail {

inline bool is_degenerate(const SampleMoments& m) { return m.n > 1 && m.variance == 0.0; }

/// |mean| / se with the zero-variance case mapped to 0 (exact) or inf.
inline double z_score(double mean, double se) {
  if (se > 0.0) return std::abs(mean) / se;
  return std::abs(mean) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
}

inline std::vector<double> paired_difference(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return d;
}

inline void require_aligned(const std::vector<std::vector<double>>& samples, const char* who) {
  if (samples.size() < 2) throw std::invalid_argument(std::string(who) + ": need at least 2 checkpoints");
  for (const auto& s : samples) {
    if (s.size() != samples.front().size() || s.size() < 2) {
      throw std::invalid_argument(std::string(who) + ": checkpoint samples must be aligned and have >= 2 paths");
    }
  }
}

}  // namespace detail

/// Martingale check on per-path values at checkpoints (samples[c][path]):
///   (i) the mean is constant, either equal to `expected_mean` at every
///       checkpoint or, without it, equal to the first checkpoint's mean
///       (paired differences);
///   (ii) each increment is uncorrelated with the current level (OLS slope
///       of x_{c+1} - x_c on x_c within the band).
/// The statistic is the largest standardised deviation over all comparisons.
inline StatReport martingale_test(const std::vector<std::vector<double>>& samples, std::span<const double> times,
                                  std::optional<double> expected_mean = std::nullopt, BandPolicy band = {},
                                  std::string name = "martingale") {
  detail::require_aligned(samples, "martingale_test");
  StatReport rep;
  rep.name = std::move(name);
  rep.n_paths = samples.front().size();
  rep.checkpoints.assign(times.begin(), times.end());
  const std::size_t m = samples.size();
  const std::size_t comparisons = (expected_mean ? m : m - 1) + (m - 1);
  rep.threshold = band.width(comparisons);

  double worst = 0.0;
  bool degenerate = false;
  const auto first = moments(samples.front());
  rep.estimate = first.mean;
  rep.std_error = first.se();
  for (std::size_t c = 0; c < m; ++c) {
    if (expected_mean) {
      const auto mc = moments(samples[c]);
      degenerate |= detail::is_degenerate(mc);
      const double zc = detail::z_score(mc.mean - *expected_mean, mc.se());
      if (zc >= worst) {
        worst = zc;
        rep.estimate = mc.mean;
        rep.std_error = mc.se();
      }
    } else if (c > 0) {
      const auto d = moments(detail::paired_difference(samples[c], samples.front()));
      degenerate |= detail::is_degenerate(d);
      const double zc = detail::z_score(d.mean, d.se());
      if (zc >= worst) {
        worst = zc;
        rep.estimate = d.mean;
        rep.std_error = d.se();
      }
    }
  }
  // Increment-on-level regressions.
  for (std::size_t c = 0; c + 1 < m; ++c) {
    const auto& x = samples[c];
    const auto level = moments(x);
    if (level.variance == 0.0) continue;  // nothing to regress on
    const auto inc = detail::paired_difference(samples[c + 1], x);
    const auto incm = moments(inc);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - level.mean) * (inc[i] - incm.mean);
      sxx += (x[i] - level.mean) * (x[i] - level.mean);
    }
    const double slope = sxy / sxx;
    // Heteroskedasticity-robust (White) standard error: increments of a
    // martingale need not have constant conditional variance.
    double meat = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dx = x[i] - level.mean;
      const double e = inc[i] - incm.mean - slope * dx;
      meat += dx * dx * e * e;
    }
    const double n = static_cast<double>(x.size());
    const double se = std::sqrt(meat * n / (n - 2.0)) / sxx;
    const double zc = detail::z_score(slope, se);
    if (zc > worst) {
      worst = zc;
      rep.flags.push_back("increment-level slope at t=" + std::to_string(times[c]) + " is " + std::to_string(slope));
    }
  }
  if (degenerate) rep.flags.push_back("degenerate: zero-variance sample");
  rep.statistic = worst;
  rep.passed = worst <= rep.threshold;
  return rep;
}

/// Supermartingale check: for consecutive checkpoints the paired mean
/// increment must not exceed the band (one-sided).
inline StatReport supermartingale_test(const std::vector<std::vector<double>>& samples, std::span<const double> times,
                                       BandPolicy band = {}, std::string name = "supermartingale") {
  detail::require_aligned(samples, "supermartingale_test");
  StatReport rep;
  rep.name = std::move(name);
  rep.n_paths = samples.front().size();
  rep.checkpoints.assign(times.begin(), times.end());
  rep.threshold = band.width(samples.size() - 1);
  double worst = -std::numeric_limits<double>::infinity();
  bool degenerate = false;
  for (std::size_t c = 0; c + 1 < samples.size(); ++c) {
    const auto d = moments(detail::paired_difference(samples[c + 1], samples[c]));
    degenerate |= detail::is_degenerate(d);
    double zc;
    if (d.se() > 0.0) {
      zc = d.mean / d.se();
    } else {
      zc = d.mean <= 1e-12 * std::max(1.0, std::abs(moments(samples[c]).mean))
               ? -std::numeric_limits<double>::infinity()
               : std::numeric_limits<double>::infinity();
    }
    if (zc >= worst) {
      worst = zc;
      rep.estimate = d.mean;
      rep.std_error = d.se();
    }
  }
  if (degenerate) rep.flags.push_back("degenerate: zero-variance sample");
  rep.statistic = worst;
  rep.passed = worst <= rep.threshold;
  return rep;
}

/// One-sample KS against N(0, scale^2) at the given level.
inline StatReport normality_test(std::span<const double> samples, double scale = 1.0, double level = 0.01,
                                 std::string name = "normality") {
  if (samples.size() < 1000) throw std::invalid_argument("normality_test: need at least 1000 samples");
  if (!(scale > 0.0)) throw std::invalid_argument("normality_test: scale must be > 0");
  StatReport rep;
  rep.name = std::move(name);
  rep.n_paths = samples.size();
  const auto mo = moments(samples);
  rep.estimate = std::sqrt(mo.variance);
  rep.std_error = rep.estimate / std::sqrt(2.0 * static_cast<double>(mo.n));
  const double d = ks_distance({samples.begin(), samples.end()}, [&](double x) { return numerics::normal_cdf(x / scale); });
  const double n = static_cast<double>(samples.size());
  const double p = ks_pvalue(d, n);
  rep.statistic = p;  // compared against the level from below
  rep.threshold = level;
  rep.flags.push_back("sqrt(n) D = " + std::to_string(std::sqrt(n) * d));
  rep.passed = p >= level;
  return rep;
}

/// Two-sample KS at the given level.
inline StatReport ks_two_sample_test(std::span<const double> a, std::span<const double> b, double level = 0.01,
                                     std::string name = "ks-two-sample") {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("ks_two_sample_test: both samples need >= 2 values");
  StatReport rep;
  rep.name = std::move(name);
  rep.n_paths = std::min(a.size(), b.size());
  const double d = ks_distance_two_sample({a.begin(), a.end()}, {b.begin(), b.end()});
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n_eff = na * nb / (na + nb);
  rep.estimate = d;
  const double p = ks_pvalue(d, n_eff);
  rep.statistic = p;  // compared against the level from below
  rep.threshold = level;
  rep.flags.push_back("sqrt(n) D = " + std::to_string(std::sqrt(n_eff) * d));
  rep.passed = p >= level;
  return rep;
}

/// Sorts paths by price into ten equal-count bins; in every bin the mean of
/// (payoff - price) must lie within the band. The standard error uses the
/// sample variance of the gaps or, when `null_variance` is given, the
/// variance Var(payoff | price) implied by calibration (P(1-P) for a 0/1
/// payoff), which stays meaningful in bins where no payoff of 1 occurs.
inline StatReport calibration_test(std::span<const double> prices, std::span<const double> payoffs,
                                   BandPolicy band = {}, std::string name = "calibration",
                                   const std::function<double(double)>& null_variance = {}) {
  if (prices.size() != payoffs.size()) throw std::invalid_argument("calibration_test: size mismatch");
  for (double p : prices) {
    if (!std::isfinite(p)) throw std::invalid_argument("calibration_test: prices must be finite");
  }
  StatReport rep;
  rep.name = std::move(name);
  rep.n_paths = prices.size();
  std::vector<std::size_t> order(prices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prices[a] < prices[b]; });
  constexpr std::size_t kBins = 10;
  rep.threshold = band.width(kBins);
  double worst = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < kBins; ++b) {
    const std::size_t lo = b * order.size() / kBins;
    const std::size_t hi = (b + 1) * order.size() / kBins;
    if (hi - lo < 2) {
      rep.flags.push_back("bin " + std::to_string(b) + " skipped: fewer than 2 paths");
      continue;
    }
    std::vector<double> gap;
    gap.reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) gap.push_back(payoffs[order[k]] - prices[order[k]]);
    const auto g = moments(gap);
    double se = g.se();
    if (null_variance) {
      double v = 0.0;
      for (std::size_t k = lo; k < hi; ++k) v += null_variance(prices[order[k]]);
      se = std::sqrt(v) / static_cast<double>(hi - lo);
    }
    const double zc = detail::z_score(g.mean, se);
    ++used;
    if (zc >= worst) {
      worst = zc;
      rep.estimate = g.mean;
      rep.std_error = se;
    }
  }
  if (used == 0) throw std::invalid_argument("calibration_test: no usable bins");
  rep.statistic = worst;
  rep.passed = worst <= rep.threshold;
  return rep;
}

// ---------------------------------------------------------------------------
// Profit

struct FactorProfit {
  double factor = 1.0;
  ProfitEstimate profit;
  bool diverged = false;
};

struct ProfitOptimality {
  StatReport report;
  std::vector<FactorProfit> factors;
  double value = 0.0;  ///< value-function oracle
  std::size_t candidate = 0;

  /// True when every non-candidate factor earns less than the candidate by
  /// more than z combined standard errors.
  bool strictly_dominated(double z = 3.0) const {
    const auto& c = factors[candidate].profit;
    for (std::size_t i = 0; i < factors.size(); ++i) {
      if (i == candidate) continue;
      const auto& o = factors[i].profit;
      if (!(c.discounted - o.discounted > z * std::hypot(c.discounted_se, o.discounted_se))) return false;
    }
    return true;
  }
};

namespace detail {

template <class RunFactor>
ProfitOptimality profit_optimality(std::span<const double> factors, double value, RunFactor&& run_factor,
                                   BandPolicy band, std::size_t n_paths, std::string name) {
  ProfitOptimality out;
  out.value = value;
  const auto it = std::find(factors.begin(), factors.end(), 1.0);
  if (it == factors.end()) throw std::invalid_argument("profit_optimality_test: factors must include 1");
  out.candidate = static_cast<std::size_t>(it - factors.begin());
  for (double c : factors) {
    FactorProfit fp;
    fp.factor = c;
    try {
      fp.profit = run_factor(c);
    } catch (const divergence_error&) {
      fp.diverged = true;
      fp.profit.discounted = -std::numeric_limits<double>::infinity();
    }
    out.factors.push_back(fp);
  }
  auto& rep = out.report;
  rep.name = std::move(name);
  rep.n_paths = n_paths;
  const auto& cand = out.factors[out.candidate].profit;
  rep.estimate = cand.discounted;
  rep.std_error = cand.discounted_se;
  rep.threshold = band.width(factors.size());
  rep.statistic = detail::z_score(cand.discounted - value, cand.discounted_se);
  bool ok = rep.statistic <= rep.threshold;
  for (std::size_t i = 0; i < out.factors.size(); ++i) {
    if (i == out.candidate) continue;
    const auto& f = out.factors[i];
    if (f.diverged) {
      rep.flags.push_back("factor " + std::to_string(f.factor) + " diverged");
      continue;
    }
    const double diff = cand.discounted - f.profit.discounted;
    const double se = std::hypot(cand.discounted_se, f.profit.discounted_se);
    const bool below = diff > rep.threshold * se;
    const bool tied_below = diff >= 0.0 && diff <= std::max(se, 1e-300);
    if (!below && !tied_below) {
      ok = false;
      rep.flags.push_back("factor " + std::to_string(f.factor) + " is not dominated: profit " +
                          std::to_string(f.profit.discounted));
    }
  }
  rep.passed = ok;
  return out;
}

}  // namespace detail

/// Insider profit for Gamma = v under c alpha*, c in `factors` (must contain
/// 1), compared with the value J at the starting level.
inline ProfitOptimality profit_optimality_test(const BernoulliMarket& market, int v, std::span<const double> factors,
                                               const SimulationConfig& cfg, BandPolicy band = {}) {
  const double value = value_J(initial_y(market), v, market.params);
  return detail::profit_optimality(
      factors, value,
      [&](double c) {
        auto cc = cfg;
        cc.strategy_scale = c;
        return expected_profit_mc(market, v, cc);
      },
      band, cfg.n_paths, "profit-optimality");
}

inline ProfitOptimality profit_optimality_test(const GeneralMarket& market, double v, std::span<const double> factors,
                                               const SimulationConfig& cfg, const QuadratureCfg& q = {},
                                               BandPolicy band = {}) {
  const double value = value_J_general(0.0, 0.0, v, market, q);
  return detail::profit_optimality(
      factors, value,
      [&](double c) {
        auto cc = cfg;
        cc.strategy_scale = c;
        return expected_profit_mc(market, v, cc, q);
      },
      band, cfg.n_paths, "profit-optimality");
}

// ---------------------------------------------------------------------------
// Announcement layer

struct AnnouncementRun {
  std::vector<double> times;
  std::vector<double> tau;
  std::vector<std::vector<double>> S, N, M, U;  ///< [checkpoint][path]
  std::vector<std::vector<double>> abs_gap;     ///< |S_t - Gamma|

  std::size_t n_jumps = 0;          ///< paths with tau <= T
  std::size_t n_large_jumps = 0;    ///< ... with |Gamma - P_{tau-}| > jump_threshold
  std::size_t n_positive_jumps = 0; ///< ... with |Gamma - P_{tau-}| > 0
  double jump_threshold = 0.01;

  StatReport S_test, N_test, M_test, U_test, gap_test;

  double large_jump_fraction() const { return n_jumps ? static_cast<double>(n_large_jumps) / n_jumps : 0.0; }
  double positive_jump_fraction() const { return n_jumps ? static_cast<double>(n_positive_jumps) / n_jumps : 0.0; }
};

/// Assembles, from a run with the announcement layer,
///   S_t = P_t 1[t < tau] + Gamma 1[t >= tau]
///   N_t = Gamma 1[t >= tau] - r int_0^{t ^ tau} P ds
///   M_t = 1[t >= tau] - r (t ^ tau)
///   U_t = P_t 1[t < tau] + r int_0^{t ^ tau} P ds
/// and tests S and U for constant means, N and M for mean zero, and
/// E|S_t - Gamma| for being non-increasing.
inline AnnouncementRun announcement_sim(const EquilibriumRun& run, double r, BandPolicy band = {},
                                        double jump_threshold = 0.01) {
  if (!run.has_announcement()) throw std::invalid_argument("announcement_sim: run has no announcement layer");
  if (run.n_checkpoints() < 2) throw std::invalid_argument("announcement_sim: need at least 2 checkpoints");
  AnnouncementRun out;
  out.times = run.checkpoints;
  out.jump_threshold = jump_threshold;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < run.n_paths; ++i) {
    if (!run.diverged[i]) keep.push_back(i);
  }
  out.tau.reserve(keep.size());
  for (std::size_t i : keep) out.tau.push_back(run.tau[i]);
  const std::size_t ncp = run.n_checkpoints();
  for (auto* f : {&out.S, &out.N, &out.M, &out.U, &out.abs_gap}) f->assign(ncp, std::vector<double>(keep.size()));
  for (std::size_t c = 0; c < ncp; ++c) {
    const double t = run.checkpoints[c];
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const std::size_t i = keep[k];
      const bool announced = t >= run.tau[i];
      const double price = run.at(run.P, c, i);
      const double ip = run.at(run.int_P_to_tau, c, i);
      const double g = run.gamma[i];
      out.S[c][k] = announced ? g : price;
      out.N[c][k] = (announced ? g : 0.0) - r * ip;
      out.M[c][k] = (announced ? 1.0 : 0.0) - r * std::min(t, run.tau[i]);
      out.U[c][k] = (announced ? 0.0 : price) + r * ip;
      out.abs_gap[c][k] = std::abs(out.S[c][k] - g);
    }
  }
  const double t_end = run.grid.t_end();
  for (std::size_t i : keep) {
    if (run.tau[i] <= t_end) {
      ++out.n_jumps;
      const double log_jump = run.pre_jump_log_gap[i];
      if (log_jump > std::log(jump_threshold)) ++out.n_large_jumps;
      if (log_jump > -std::numeric_limits<double>::infinity()) ++out.n_positive_jumps;
    }
  }
  out.S_test = martingale_test(out.S, out.times, std::nullopt, band, "announcement-S");
  out.N_test = martingale_test(out.N, out.times, 0.0, band, "announcement-N");
  out.M_test = martingale_test(out.M, out.times, 0.0, band, "announcement-M");
  out.U_test = martingale_test(out.U, out.times, std::nullopt, band, "announcement-U");
  out.gap_test = supermartingale_test(out.abs_gap, out.times, band, "announcement-gap-decreasing");
  return out;
}

// ---------------------------------------------------------------------------
// Drift-offset invariance

/// Simulates the Bernoulli equilibrium with the same seed for each d and
/// reports the largest pointwise price gap against the first d (threshold
/// 5 dt). Also flags the largest deviation of Y_d - Y_{d0} from the shift
/// (d0 - d)/r.
inline StatReport d_invariance_test(const BernoulliMarket& market, std::span<const double> d_values,
                                    const SimulationConfig& cfg) {
  if (d_values.empty()) throw std::invalid_argument("d_invariance_test: need at least one d");
  auto c = cfg;
  c.announcement = false;
  if (c.checkpoints.empty()) c.checkpoints = {c.grid().t_end()};
  StatReport rep;
  rep.name = "d-invariance";
  rep.n_paths = c.n_paths;
  rep.checkpoints = c.checkpoints;
  rep.threshold = 5.0 * c.dt;
  auto base_market = market;
  base_market.params.d = d_values[0];
  const auto base = simulate_equilibrium(base_market, std::nullopt, c);
  double worst_p = 0.0, worst_y = 0.0;
  for (std::size_t j = 1; j < d_values.size(); ++j) {
    auto mk = market;
    mk.params.d = d_values[j];
    const auto other = simulate_equilibrium(mk, std::nullopt, c);
    const double shift = (d_values[0] - d_values[j]) / market.params.r;
    for (std::size_t k = 0; k < base.P.size(); ++k) {
      worst_p = std::max(worst_p, std::abs(base.P[k] - other.P[k]));
      worst_y = std::max(worst_y, std::abs(other.Y[k] - base.Y[k] - shift));
    }
  }
  rep.statistic = worst_p;
  rep.estimate = worst_p;
  rep.flags.push_back("max |Y_d - Y_d0 - shift| = " + std::to_string(worst_y));
  rep.passed = worst_p <= rep.threshold && worst_y <= rep.threshold;
  return rep;
}

}  // namespace kyleback
