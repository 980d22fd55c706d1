#pragma once

// Seedable Euler-Maruyama path simulation and pathwise functionals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "kyleback/numerics.hpp"
#include "kyleback/rng.hpp"

namespace kyleback {

struct TimeGrid {
  double t0 = 0.0;
  double dt = 1e-3;
  std::size_t n_steps = 1;

  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
  double t_end() const { return time(n_steps); }

  /// Index of the grid time equal to t (relative tolerance 1e-9); throws if t
  /// is not a grid time.
  std::size_t index_of(double t) const {
    const double pos = (t - t0) / dt;
    const double k = std::round(pos);
    if (k < 0.0 || k > static_cast<double>(n_steps) || std::abs(time(static_cast<std::size_t>(k)) - t) >
                                                              1e-9 * std::max(1.0, std::abs(t))) {
      throw std::invalid_argument("time " + std::to_string(t) + " is not on the grid");
    }
    return static_cast<std::size_t>(k);
  }
};

/// Uniform grid from 0 with n_steps = ceil(t_end/dt); the last time may
/// overshoot t_end by less than dt.
inline TimeGrid make_grid(double t_end, double dt) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("make_grid: t_end must be > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("make_grid: dt must be > 0");
  const double ratio = t_end / dt;
  const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(ratio - 1e-9 * std::max(1.0, ratio))));
  return TimeGrid{0.0, dt, n};
}

struct PathBundle {
  TimeGrid grid;
  std::size_t n_paths = 0;
  std::vector<double> values;            ///< row-major n_paths x (n_steps + 1)
  std::vector<std::uint64_t> stream_ids;  ///< path index used to key each row's noise
  std::uint64_t seed = 0;

  std::size_t width() const { return grid.n_steps + 1; }
  std::span<const double> path(std::size_t i) const { return {values.data() + i * width(), width()}; }
  std::span<double> path(std::size_t i) { return {values.data() + i * width(), width()}; }
  double at(std::size_t i, std::size_t k) const { return values[i * width() + k]; }
};

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once and results are expected to be written to
/// index-addressed storage, so the outcome does not depend on scheduling.
template <class Body>
void parallel_for_paths(std::size_t n, Body&& body, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Brownian paths B_0 = 0, B_{k+1} = B_k + sqrt(dt) Z_k with Z drawn from
/// NoiseStream(seed, i) on the brownian channel.
inline PathBundle brownian_bundle(const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed,
                                  unsigned threads = 0) {
  if (n_paths == 0) throw std::invalid_argument("brownian_bundle: n_paths must be >= 1");
  PathBundle b;
  b.grid = grid;
  b.n_paths = n_paths;
  b.seed = seed;
  b.values.assign(n_paths * b.width(), 0.0);
  b.stream_ids.resize(n_paths);
  const double sq = std::sqrt(grid.dt);
  parallel_for_paths(
      n_paths,
      [&](std::size_t i) {
        b.stream_ids[i] = i;
        NormalSequence z(NoiseStream(seed, i), Channel::brownian);
        auto row = b.path(i);
        for (std::size_t k = 0; k < grid.n_steps; ++k) row[k + 1] = row[k] + sq * z.next();
      },
      threads);
  return b;
}

/// x_{k+1} = x_k + drift(t_k, x_k) dt + diffusion(t_k, x_k) dB_k, with dB the
/// brownian channel of `stream`. Throws divergence_error on a non-finite state.
template <class Drift, class Diffusion>
std::vector<double> euler_maruyama(Drift&& drift, Diffusion&& diffusion, double x0, const TimeGrid& grid,
                                   const NoiseStream& stream) {
  std::vector<double> path(grid.n_steps + 1);
  path[0] = x0;
  const double sq = std::sqrt(grid.dt);
  NormalSequence z(stream, Channel::brownian);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const double x = path[k];
    const double next = x + drift(t, x) * grid.dt + diffusion(t, x) * sq * z.next();
    if (!std::isfinite(next)) throw divergence_error("euler_maruyama: state left the finite reals", k + 1);
    path[k + 1] = next;
  }
  return path;
}

inline double quadratic_variation(std::span<const double> path) {
  if (path.size() < 2) throw std::invalid_argument("quadratic_variation: path needs at least 2 points");
  double qv = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double inc = path[k] - path[k - 1];
    qv += inc * inc;
  }
  return qv;
}

/// Left-endpoint sum of e^{-r t_k} g_k dt; one integrand value per step.
inline double discounted_integral(std::span<const double> integrand, double r, const TimeGrid& grid) {
  if (integrand.size() != grid.n_steps) {
    throw std::invalid_argument("discounted_integral: integrand has " + std::to_string(integrand.size()) +
                                " values for " + std::to_string(grid.n_steps) + " steps");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.n_steps; ++k) acc += std::exp(-r * grid.time(k)) * integrand[k];
  return acc * grid.dt;
}

/// Left-endpoint Ito sum  sum_k g_k (x_{k+1} - x_k).
inline double pathwise_integral_dx(std::span<const double> g, std::span<const double> path) {
  if (path.size() < 2 || g.size() + 1 != path.size()) {
    throw std::invalid_argument("pathwise_integral_dx: need one integrand value per path increment");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * (path[k + 1] - path[k]);
  return acc;
}

// ---------------------------------------------------------------------------
// Fixed-order reductions

struct SampleMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased
  double se() const { return n > 1 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

/// Two-pass mean and variance, summed in index order.
inline SampleMoments moments(std::span<const double> xs) {
  SampleMoments m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double s = 0.0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.variance = ss / static_cast<double>(m.n - 1);
  }
  return m;
}

}  // namespace kyleback
