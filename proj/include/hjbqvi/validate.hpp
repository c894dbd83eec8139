#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/forest.hpp"
#include "hjbqvi/grid.hpp"
#include "hjbqvi/problem.hpp"
#include "hjbqvi/rng.hpp"
#include "hjbqvi/solver.hpp"

namespace hjbqvi::validate {

// max_i |phi_i - V(x_i)| over interior nodes of a 1-D forest grid.
inline double compare_analytic(std::span<const double> phi, const SpaceGrid& grid,
                               const forest::AnalyticInfiniteSolution& exact) {
  double err = 0.0;
  for (Index i = 0; i < grid.interior_count(); ++i) err = std::max(err, std::abs(phi[i] - exact(grid.coord(i, 0))));
  return err;
}

struct ConvergenceRow {
  double dx = 0.0;
  double max_error = 0.0;
  std::optional<double> switch_point;
  Index iterations = 0;
  double seconds = 0.0;
  Index interior_nodes = 0;
  bool invariants_ok = true;
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  std::vector<std::pair<double, std::string>> rejected;  // dx, reason
  std::optional<double> order;                           // least-squares slope of log error vs log dx
};

// Least-squares slope of log(y) against log(x); empty with fewer than two points.
inline std::optional<double> fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) return std::nullopt;
  return (n * sxy - sx * sy) / denom;
}

inline ConvergenceStudy convergence_study(const forest::ForestParams& params, std::span<const double> dx_list,
                                          const SolverOptions& opt = {}) {
  for (Index j = 1; j < dx_list.size(); ++j)
    if (!(dx_list[j] < dx_list[j - 1])) throw InvalidArgument("dx list must be sorted in descending order");
  const auto exact = forest::solve_analytic(params);
  ConvergenceStudy study;
  for (double dx : dx_list) {
    ProblemSpec spec;
    try {
      spec = forest::make_infinite_spec(params, dx);
    } catch (const InvalidArgument& e) {
      study.rejected.emplace_back(dx, e.what());
      continue;
    }
    const SpaceGrid grid(spec.domain, spec.steps);
    StationarySolution sol;
    try {
      sol = solve_stationary(spec, grid, opt);
    } catch (const std::exception& e) {
      throw SolverError("dx=" + std::to_string(dx) + ": " + e.what());
    }
    ConvergenceRow row;
    row.dx = dx;
    row.max_error = compare_analytic(sol.phi, grid, exact);
    row.switch_point = extract_switch_point(sol.policy, grid);
    row.iterations = sol.iterations();
    row.seconds = sol.report.seconds;
    row.interior_nodes = grid.interior_count();
    row.invariants_ok = sol.report.invariants_ok;
    study.rows.push_back(row);
  }
  std::vector<double> xs, ys;
  for (const auto& r : study.rows) {
    if (r.max_error > 0.0) {
      xs.push_back(r.dx);
      ys.push_back(r.max_error);
    }
  }
  study.order = fit_loglog_slope(xs, ys);
  return study;
}

// (t_k, switch point) for k = 0..N^t-1; no intervention is reported as the
// upper end of the domain.
inline std::vector<std::pair<double, double>> switch_point_trajectory(std::span<const PolicyField> policies,
                                                                      const Grids& grids) {
  if (grids.space.dimension() != 1) throw InvalidArgument("switch point trajectory needs a 1-D grid");
  const double upper = grids.space.box()[0].hi;
  std::vector<std::pair<double, double>> out;
  out.reserve(policies.size());
  for (Index k = 0; k < policies.size(); ++k) {
    const auto y = extract_switch_point(policies[k], grids.space);
    out.emplace_back(grids.time.t(k), y.value_or(upper));
  }
  return out;
}

// Number of trailing steps (ending at t_{N-1}) whose switch point sits at the
// upper end of the domain, i.e. no intervention anywhere.
inline Index terminal_plateau(std::span<const std::pair<double, double>> trajectory, double upper) {
  Index n = 0;
  for (Index k = trajectory.size(); k-- > 0;) {
    if (trajectory[k].second < upper) break;
    ++n;
  }
  return n;
}

struct McEstimate {
  Index paths = 0;        // requested
  Index valid_paths = 0;  // finite paths used in the estimate
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t seed = 0;
  Index clamp_events = 0;
  Index excluded = 0;
  Index interventions = 0;
};

namespace detail {

// Lower-triangular factor of a symmetric positive semi-definite matrix;
// non-positive pivots give a zero column.
inline void cholesky_psd(std::span<const double> a, Index n, std::span<double> l) {
  std::fill(l.begin(), l.end(), 0.0);
  for (Index j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (Index k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (d <= 0.0) continue;
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (Index i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (Index k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
}

}  // namespace detail

// Euler-Maruyama on the solver's time grid under the extracted policy.
// Interventions are checked at t_{k0+1}, ..., t_{N-1} on the nearest interior
// node; the state jumps to the intervention target node and K is collected at
// the pre-jump state. Leaving the domain clamps each offending coordinate to
// the outermost interior node and is counted.
inline McEstimate simulate_policy(const ProblemSpec& spec, const Grids& grids, std::span<const PolicyField> policies,
                                  std::span<const double> x0, double t0, Index paths, std::uint64_t seed) {
  if (paths == 0) throw InvalidArgument("path count must be positive");
  const SpaceGrid& grid = grids.space;
  const Index n = grid.dimension();
  const Index N = grids.time.steps();
  if (policies.size() != N) throw InvalidArgument("need one policy per time step");
  if (x0.size() != n) throw InvalidArgument("initial state has wrong dimension");
  if (!spec.terminal_value) throw InvalidArgument("terminal_value is required");
  const double dt = grids.time.dt();
  const double k0_real = t0 / dt;
  const Index k0 = static_cast<Index>(std::llround(k0_real));
  if (k0 >= N || std::abs(k0_real - static_cast<double>(k0)) > 1e-9 * std::max(1.0, k0_real))
    throw InvalidArgument("t0 must be a time node before the horizon");
  for (Index a = 0; a < n; ++a)
    if (!(x0[a] > grid.box()[a].lo && x0[a] < grid.box()[a].hi)) throw InvalidArgument("x0 must be interior");

  const Philox4x32 gen(seed);
  const double sqrt_dt = std::sqrt(dt);
  std::vector<double> x(n), mu(n), a(n * n), l(n * n), z(n);
  McEstimate est;
  est.paths = paths;
  est.seed = seed;
  double mean = 0.0, m2 = 0.0;  // Welford

  for (Index p = 0; p < paths; ++p) {
    std::copy(x0.begin(), x0.end(), x.begin());
    double payoff = 0.0;
    Index clamps = 0, jumps = 0;
    bool finite = true;
    for (Index k = k0; k < N && finite; ++k) {
      const double t = grids.time.t(k);
      const PolicyField& pol = policies[k];
      Index node = grid.nearest_interior(x);
      if (k > k0) {
        // A chain of impulses at one time ends at a continuation node since eta(i, z) < i.
        while (!pol.continuation[node]) {
          const auto& zeta = spec.controls.impulse[pol.impulse[node]];
          payoff += spec.intervention_profit(t, x, zeta);
          node = spec.intervention_index(node, zeta);
          const auto target = grid.point(node);
          std::copy(target.begin(), target.end(), x.begin());
          ++jumps;
        }
      }
      const auto& alpha = spec.controls.regular[pol.regular[node]];
      if (spec.running_profit) payoff += spec.running_profit(t, x, alpha) * dt;
      spec.drift(t, x, alpha, mu);
      spec.diffusion_sq(t, x, alpha, a);
      detail::cholesky_psd(a, n, l);
      for (Index b = 0; 2 * b < n; ++b) {
        const auto pair = normal_pair(gen, p, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(b));
        z[2 * b] = pair[0];
        if (2 * b + 1 < n) z[2 * b + 1] = pair[1];
      }
      for (Index r = 0; r < n; ++r) {
        double noise = 0.0;
        for (Index c = 0; c <= r; ++c) noise += l[r * n + c] * z[c];
        x[r] += mu[r] * dt + noise * sqrt_dt;
      }
      for (Index r = 0; r < n; ++r) {
        if (!std::isfinite(x[r])) {
          finite = false;
          break;
        }
        const double lo = grid.box()[r].lo + grid.step(r), hi = grid.box()[r].hi - grid.step(r);
        if (x[r] <= grid.box()[r].lo || x[r] >= grid.box()[r].hi) {
          x[r] = std::clamp(x[r], lo, hi);
          ++clamps;
        }
      }
    }
    if (finite) payoff += spec.terminal_value(x);
    if (!finite || !std::isfinite(payoff)) {
      ++est.excluded;
      continue;
    }
    ++est.valid_paths;
    est.clamp_events += clamps;
    est.interventions += jumps;
    const double delta = payoff - mean;
    mean += delta / static_cast<double>(est.valid_paths);
    m2 += delta * (payoff - mean);
  }
  if (est.valid_paths == 0) throw SolverError("every simulated path was non-finite");
  const double m = static_cast<double>(est.valid_paths);
  est.mean = mean;
  const double var = est.valid_paths > 1 ? m2 / (m - 1.0) : 0.0;
  est.std_error = std::sqrt(var / m);
  return est;
}

}  // namespace hjbqvi::validate
