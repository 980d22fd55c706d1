#pragma once

// Simulation configuration and per-path output shared by the Bernoulli and
// general-payoff equilibria.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "kyleback/sde_engine.hpp"

namespace kyleback {

/// Grid, sample size and seeding for one simulated bundle.
struct SimulationConfig {
  double t_end = 8.0;
  double dt = 1e-3;
  std::size_t n_paths = 20000;
  std::uint64_t seed = 42;
  std::vector<double> checkpoints;  ///< grid times at which per-path state is kept
  unsigned threads = 0;             ///< 0 = hardware concurrency
  double strategy_scale = 1.0;      ///< insider trades c * alpha*
  bool announcement = true;         ///< draw tau and accumulate the announcement layer
  double divergence_budget = 1e-3;  ///< max fraction of paths allowed to diverge

  TimeGrid grid() const { return make_grid(t_end, dt); }
};

inline std::vector<std::size_t> checkpoint_indices(const TimeGrid& grid, std::span<const double> times) {
  std::vector<std::size_t> idx;
  idx.reserve(times.size());
  for (double t : times) idx.push_back(grid.index_of(t));
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (idx[i] <= idx[i - 1]) throw std::invalid_argument("checkpoints must be strictly increasing");
  }
  return idx;
}

/// Per-path state of one simulated bundle. Checkpoint arrays are laid out
/// [checkpoint][path].
struct EquilibriumRun {
  TimeGrid grid;
  std::vector<double> checkpoints;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  double strategy_scale = 1.0;
  double y0 = 0.0;

  std::vector<double> gamma;  ///< payoff realisation per path
  std::vector<double> pin;    ///< f^{-1}(Gamma) per path (general payoff only)
  std::vector<std::uint8_t> diverged;
  std::size_t n_diverged = 0;

  std::vector<double> Y, X, P, lambda, qv_X;

  std::vector<double> profit_discounted;  ///< int_0^T e^{-rt} (Gamma - P) alpha dt
  std::vector<double> profit_stopped;     ///< int_0^{tau ^ T} (Gamma - P) alpha dt

  // Announcement layer (empty when disabled).
  std::vector<double> tau;
  std::vector<double> int_P_to_tau;  ///< [checkpoint][path] int_0^{t ^ tau} P ds
  std::vector<double> pre_jump_price;  ///< P just before tau, NaN when tau > T
  std::vector<double> pre_jump_log_gap;  ///< log |Gamma - P| just before tau; finite where P itself underflows

  bool has_announcement() const { return !tau.empty(); }
  std::size_t n_checkpoints() const { return checkpoints.size(); }
  double at(const std::vector<double>& field, std::size_t cp, std::size_t path) const {
    return field[cp * n_paths + path];
  }
  /// S_t on the grid: P before tau, Gamma from tau on.
  double S(std::size_t cp, std::size_t path) const {
    return checkpoints[cp] >= tau[path] ? gamma[path] : at(P, cp, path);
  }
  /// Values of a checkpoint field over non-diverged paths, in path order.
  std::vector<double> column(const std::vector<double>& field, std::size_t cp) const {
    std::vector<double> out;
    out.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
      if (!diverged[i]) out.push_back(field[cp * n_paths + i]);
    }
    return out;
  }
  std::vector<double> per_path(const std::vector<double>& field) const {
    std::vector<double> out;
    out.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
      if (!diverged[i]) out.push_back(field[i]);
    }
    return out;
  }
  double divergence_fraction() const { return n_paths ? static_cast<double>(n_diverged) / n_paths : 0.0; }
};

struct ProfitEstimate {
  double discounted = 0.0;
  double discounted_se = 0.0;
  double stopped = 0.0;
  double stopped_se = 0.0;
  std::size_t n_paths = 0;
};

inline ProfitEstimate summarize_profit(const EquilibriumRun& run) {
  const auto d = moments(run.per_path(run.profit_discounted));
  const auto s = moments(run.per_path(run.profit_stopped));
  return {d.mean, d.se(), s.mean, s.se(), d.n};
}

}  // namespace kyleback
