#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/grid.hpp"
#include "hjbqvi/problem.hpp"

// Forest harvesting under geometric Brownian biomass growth: cut everything,
// replant to x_tilde, pay proportional cost beta and fixed cost Q.
namespace hjbqvi::forest {

struct ForestParams {
  double x_max = 10.0;    // right end of the domain
  double x_tilde = 1.0;   // replanting biomass
  double beta = 0.1;      // proportional harvesting cost
  double Q = 2.0;         // replanting cost
  double mu = 1.0;        // growth rate
  double sigma = 1.0;     // volatility
  double lambda = 2.0;    // discount rate
};

inline void validate(const ForestParams& p) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw InvalidArgument(std::string(name) + " must be positive");
  };
  positive(p.x_max, "x_max");
  positive(p.x_tilde, "x_tilde");
  positive(p.Q, "Q");
  positive(p.mu, "mu");
  positive(p.sigma, "sigma");
  positive(p.lambda, "lambda");
  if (!(p.beta > 0.0 && p.beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  if (!(p.x_tilde < p.x_max)) throw InvalidArgument("x_tilde must be below x_max");
  if (!((1.0 - p.beta) * p.x_tilde < p.Q))
    throw InvalidArgument("need (1 - beta) x_tilde < Q, otherwise harvesting right after replanting is optimal");
}

// Positive root of sigma^2/2 g (g - 1) + mu g - lambda = 0.
inline double gamma(const ForestParams& p) {
  const double s2 = p.sigma * p.sigma;
  const double b = s2 - 2.0 * p.mu;
  return (b + std::sqrt(b * b + 8.0 * s2 * p.lambda)) / (2.0 * s2);
}

namespace detail {

// Bisection on [lo, hi], doubling hi until the residual changes sign.
inline double bracket_root(const std::function<double(double)>& residual, double lo, double hi, double tol = 1e-9,
                           int max_expansions = 60) {
  double r_lo = residual(lo);
  double r_hi = residual(hi);
  int expansions = 0;
  while ((r_lo < 0.0) == (r_hi < 0.0)) {
    if (expansions++ >= max_expansions)
      throw SolverError("no switch point in bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    hi *= 2.0;
    r_hi = residual(hi);
  }
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r_mid = residual(mid);
    if (r_mid == 0.0) return mid;
    if ((r_mid < 0.0) == (r_lo < 0.0)) {
      lo = mid;
      r_lo = r_mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Residual of y = (gamma Q - (1-beta) y (x_tilde/y)^gamma) / ((1-beta)(gamma-1)).
inline double switch_point_residual(const ForestParams& p, double g, double y) {
  const double keep = 1.0 - p.beta;
  return y - (g * p.Q - keep * y * std::pow(p.x_tilde / y, g)) / (keep * (g - 1.0));
}

inline double switch_point(const ForestParams& p) {
  validate(p);
  const double g = gamma(p);
  if (!(g > 1.0)) throw InvalidArgument("gamma must exceed 1 (need lambda > mu)");
  return detail::bracket_root([&](double y) { return switch_point_residual(p, g, y); }, p.x_tilde * (1.0 + 1e-6),
                              1e3 * p.Q / (1.0 - p.beta));
}

struct AnalyticInfiniteSolution {
  ForestParams params;
  double gamma = 0.0;
  double y = 0.0;

  // Continuation branch ((1-beta) y / gamma) (x / y)^gamma.
  double psi(double x) const { return (1.0 - params.beta) * y / gamma * std::pow(x / y, gamma); }

  double operator()(double x) const {
    return x < y ? psi(x) : (1.0 - params.beta) * x - params.Q + psi(params.x_tilde);
  }
};

inline AnalyticInfiniteSolution solve_analytic(const ForestParams& p) {
  return {p, gamma(p), switch_point(p)};
}

inline double value_infinite(double x, const ForestParams& p, const AnalyticInfiniteSolution& sol) {
  (void)p;
  return sol(x);
}

// 0-based interior index of x_tilde on the lattice with step dx.
inline Index replant_index(const ForestParams& p, double dx) {
  const double j = p.x_tilde / dx;
  const double nearest = std::round(j);
  if (std::abs(j - nearest) > 1e-9 * std::max(1.0, j))
    throw InvalidArgument("x_tilde = " + std::to_string(p.x_tilde) + " is not on the grid with step " +
                          std::to_string(dx) + "; nearest grid point is " + std::to_string(nearest * dx));
  if (nearest < 1.0) throw InvalidArgument("x_tilde must be an interior grid point");
  return static_cast<Index>(nearest) - 1;
}

namespace detail {

inline ProblemSpec common_spec(const ForestParams& p, double dx) {
  validate(p);
  const Index replant = replant_index(p, dx);
  const SpaceGrid grid({{0.0, p.x_max}}, {dx});  // checks divisibility
  if (replant >= grid.interior_count()) throw InvalidArgument("x_tilde lies outside the interior");

  ProblemSpec s;
  s.domain = {{0.0, p.x_max}};
  s.steps = {dx};
  s.drift = [mu = p.mu](double, Point x, const ControlValue&, std::span<double> out) { out[0] = mu * x[0]; };
  s.diffusion_sq = [s2 = p.sigma * p.sigma](double, Point x, const ControlValue&, std::span<double> out) {
    out[0] = s2 * x[0] * x[0];
  };
  s.intervention_index = [replant](Index, const ControlValue&) { return replant; };
  s.controls.regular = {ControlValue{}};
  s.controls.impulse = {ControlValue{}};
  s.controls.impulse_available.assign(grid.interior_count(), false);
  for (Index i = replant + 1; i < grid.interior_count(); ++i) s.controls.impulse_available[i] = true;
  return s;
}

}  // namespace detail

// Stationary problem: generator mu x V' + sigma^2 x^2 V''/2 - lambda V,
// harvest (1-beta) x - Q, psi(0) = 0, psi(x_max) = V(x_tilde) + (1-beta) x_max - Q.
inline ProblemSpec make_infinite_spec(const ForestParams& p, double dx) {
  ProblemSpec s = detail::common_spec(p, dx);
  const Index replant = replant_index(p, dx);
  const double keep = 1.0 - p.beta;
  s.discount_rate = [lambda = p.lambda](double, Point, const ControlValue&) { return lambda; };
  s.intervention_profit = [keep, Q = p.Q](double, Point x, const ControlValue&) { return keep * x[0] - Q; };
  s.boundary_value = [replant, keep, p](double, Index, Point x, std::span<const double> phi) {
    if (x[0] < 0.5 * p.x_max) return 0.0;
    return phi[replant] + keep * p.x_max - p.Q;
  };
  s.stationary = true;
  return s;
}

// Finite horizon with exit at T: no generator discount, profits discounted to
// time 0. Terminal value e^{-lambda T} (1-beta) x, minus e^{-lambda T} Q when
// subtract_terminal_q is set.
inline ProblemSpec make_finite_spec(const ForestParams& p, double dx, double T, bool subtract_terminal_q = false) {
  if (!(T > 0.0)) throw InvalidArgument("horizon T must be positive");
  ProblemSpec s = detail::common_spec(p, dx);
  const Index replant = replant_index(p, dx);
  const double keep = 1.0 - p.beta;
  s.running_profit = [](double, Point, const ControlValue&) { return 0.0; };
  s.intervention_profit = [keep, Q = p.Q, lambda = p.lambda](double t, Point x, const ControlValue&) {
    return std::exp(-lambda * t) * (keep * x[0] - Q);
  };
  s.boundary_value = [replant, keep, p](double t, Index, Point x, std::span<const double> phi) {
    if (x[0] < 0.5 * p.x_max) return 0.0;
    return phi[replant] + std::exp(-p.lambda * t) * (keep * p.x_max - p.Q);
  };
  const double disc = std::exp(-p.lambda * T);
  s.terminal_value = [disc, keep, Q = p.Q, subtract_terminal_q](Point x) {
    return disc * keep * x[0] - (subtract_terminal_q ? disc * Q : 0.0);
  };
  return s;
}

}  // namespace hjbqvi::forest
