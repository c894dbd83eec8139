#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/grid.hpp"
#include "hjbqvi/problem.hpp"
#include "hjbqvi/sparse.hpp"

namespace hjbqvi {

enum class Scheme { central, one_sided };

inline const char* to_string(Scheme s) { return s == Scheme::central ? "central" : "one_sided"; }

// Drift and diffusion evaluated at one (t, x, alpha).
struct LocalCoefficients {
  std::vector<double> drift;      // n
  std::vector<double> diffusion;  // n x n row-major
  double discount = 0.0;

  explicit LocalCoefficients(Index n) : drift(n), diffusion(n * n) {}

  double a(Index p, Index q) const { return diffusion[p * drift.size() + q]; }
};

inline void evaluate_coefficients(const ProblemSpec& spec, double t, Point x, const ControlValue& alpha,
                                  LocalCoefficients& out) {
  const Index n = out.drift.size();
  spec.drift(t, x, alpha, out.drift);
  spec.diffusion_sq(t, x, alpha, out.diffusion);
  out.discount = spec.discount_rate ? spec.discount_rate(t, x, alpha) : 0.0;
  for (Index p = 0; p < n; ++p) {
    if (out.a(p, p) < 0.0) throw InvalidArgument("diffusion matrix has a negative diagonal entry");
    for (Index q = p + 1; q < n; ++q) {
      const double apq = out.a(p, q), aqp = out.a(q, p);
      if (std::abs(apq - aqp) > 1e-12 * std::max({1.0, std::abs(apq), std::abs(aqp)}))
        throw InvalidArgument("diffusion matrix is not symmetric");
    }
  }
}

// Diagonal entry L_ii for given local coefficients.
inline double generator_diagonal(const LocalCoefficients& c, std::span<const double> steps, Scheme scheme) {
  const Index n = steps.size();
  double diag = -c.discount;
  for (Index p = 0; p < n; ++p) {
    diag -= c.a(p, p) / (steps[p] * steps[p]);
    for (Index q = 0; q < n; ++q)
      if (q != p) diag += std::abs(c.a(p, q)) / (2.0 * steps[p] * steps[q]);
    if (scheme == Scheme::one_sided) diag -= std::abs(c.drift[p]) / steps[p];
  }
  return diag;
}

// Row i of the discrete generator. Axis neighbours carry
//   1/2 [a_pp / d_p^2 - sum_q |a_pq| / (d_p d_q)] + drift term,
// diagonal neighbours carry a_pq^[kl] / (2 d_p d_q) with the positive part on
// the (+,+)/(-,-) corners and the negative part on the mixed corners.
inline std::vector<Entry> generator_row(const SpaceGrid& grid, Index i, const LocalCoefficients& c,
                                        Scheme scheme) {
  const Index n = grid.dimension();
  const auto& d = grid.steps();
  std::vector<Entry> row;
  row.reserve(1 + 2 * n + 2 * n * (n - 1));
  row.push_back({i, generator_diagonal(c, d, scheme)});
  for (Index p = 0; p < n; ++p) {
    double second = c.a(p, p) / (d[p] * d[p]);
    for (Index q = 0; q < n; ++q)
      if (q != p) second -= std::abs(c.a(p, q)) / (d[p] * d[q]);
    for (int k : {-1, 1}) {
      double drift_term = scheme == Scheme::central ? k * c.drift[p] / (2.0 * d[p])
                                                    : std::max(0.0, k * c.drift[p]) / d[p];
      row.push_back({grid.neighbor(i, p, k), 0.5 * second + drift_term});
    }
  }
  for (Index p = 0; p < n; ++p) {
    for (Index q = p + 1; q < n; ++q) {
      const double apq = c.a(p, q);
      if (apq == 0.0) continue;
      const double w = std::abs(apq) / (2.0 * d[p] * d[q]);
      if (apq > 0.0) {
        row.push_back({grid.diagonal_neighbor(i, p, 1, q, 1), w});
        row.push_back({grid.diagonal_neighbor(i, p, -1, q, -1), w});
      } else {
        row.push_back({grid.diagonal_neighbor(i, p, 1, q, -1), w});
        row.push_back({grid.diagonal_neighbor(i, p, -1, q, 1), w});
      }
    }
  }
  return row;
}

// L^{a,k}: N^x rows, N^x + boundary columns. control_field holds indices into
// spec.controls.regular, one per interior node.
inline SparseMatrix assemble_generator(const ProblemSpec& spec, const SpaceGrid& grid, double t,
                                       std::span<const Index> control_field, Scheme scheme) {
  if (control_field.size() != grid.interior_count())
    throw InvalidArgument("control field length " + std::to_string(control_field.size()) +
                          " does not match interior count " + std::to_string(grid.interior_count()));
  SparseMatrix L(grid.interior_count(), grid.size());
  LocalCoefficients c(grid.dimension());
  for (Index i = 0; i < grid.interior_count(); ++i) {
    if (control_field[i] >= spec.controls.regular.size()) throw InvalidArgument("control index out of range");
    evaluate_coefficients(spec, t, grid.point(i), spec.controls.regular[control_field[i]], c);
    L.append_row(generator_row(grid, i, c, scheme));
  }
  return L;
}

struct StabilityReport {
  bool pass = true;
  // Smallest relative margin (bound - |drift|) / max(bound, |drift|); the
  // one-sided variant uses the bound alone. Negative means violated.
  double worst_margin = std::numeric_limits<double>::infinity();
  double worst_time = 0.0;
  Index worst_node = 0;
  Index worst_axis = 0;
  Index worst_control = 0;
  Index violations = 0;
};

inline StabilityReport check_stability(const ProblemSpec& spec, const SpaceGrid& grid,
                                       std::span<const double> times, Scheme scheme) {
  StabilityReport report;
  const Index n = grid.dimension();
  const auto& d = grid.steps();
  LocalCoefficients c(n);
  for (double t : times) {
    for (Index i = 0; i < grid.interior_count(); ++i) {
      for (Index ci = 0; ci < spec.controls.regular.size(); ++ci) {
        evaluate_coefficients(spec, t, grid.point(i), spec.controls.regular[ci], c);
        for (Index p = 0; p < n; ++p) {
          double bound = c.a(p, p) / d[p];
          for (Index q = 0; q < n; ++q)
            if (q != p) bound -= std::abs(c.a(p, q)) / d[q];
          double margin;
          if (scheme == Scheme::central) {
            const double mu = std::abs(c.drift[p]);
            const double scale = std::max(std::abs(bound), mu);
            margin = scale > 0.0 ? (bound - mu) / scale : 0.0;
          } else {
            margin = bound > 0.0 ? 1.0 : (bound < 0.0 ? -1.0 : 0.0);
          }
          if (margin < -1e-12) {
            report.pass = false;
            ++report.violations;
          }
          if (margin < report.worst_margin) {
            report.worst_margin = margin;
            report.worst_time = t;
            report.worst_node = i;
            report.worst_axis = p;
            report.worst_control = ci;
          }
        }
      }
    }
  }
  return report;
}

// h = 1 / max |L_ii| over controls, interior nodes and the given times; cap
// when every diagonal vanishes.
inline double compute_h(const ProblemSpec& spec, const SpaceGrid& grid, std::span<const double> times,
                        Scheme scheme, double cap = 1.0) {
  LocalCoefficients c(grid.dimension());
  double worst = 0.0;
  for (double t : times)
    for (Index i = 0; i < grid.interior_count(); ++i)
      for (const auto& alpha : spec.controls.regular) {
        evaluate_coefficients(spec, t, grid.point(i), alpha, c);
        worst = std::max(worst, std::abs(generator_diagonal(c, grid.steps(), scheme)));
      }
  return worst > 0.0 ? std::min(cap, 1.0 / worst) : cap;
}

inline constexpr double kRowSumTolerance = 1e-12;

// Row i of the transformed operator: dt/(h+dt) (I + h L) for a time step, or
// I + h L in stationary mode (dt empty). Enforces non-negative entries and a
// row sum below one; within kRowSumTolerance the row is clamped and counted.
inline std::vector<Entry> transform_row(std::vector<Entry> row, Index i, double h, std::optional<double> dt,
                                        Index* clamped = nullptr) {
  const double scale = dt ? *dt / (h + *dt) : 1.0;
  bool has_diag = false;
  for (Entry& e : row) {
    e.value *= h;
    if (e.col == i) {
      e.value += 1.0;
      has_diag = true;
    }
  }
  if (!has_diag) row.push_back({i, 1.0});
  double sum = 0.0;
  for (Entry& e : row) {
    e.value *= scale;
    if (e.value < 0.0) {
      if (e.value < -kRowSumTolerance)
        throw InvariantViolation("transformed operator row " + std::to_string(i) + " has negative entry " +
                                 std::to_string(e.value) + " at column " + std::to_string(e.col));
      e.value = 0.0;
    }
    sum += e.value;
  }
  if (sum > 1.0 - kRowSumTolerance) {
    if (sum > 1.0 + kRowSumTolerance)
      throw InvariantViolation("transformed operator row " + std::to_string(i) + " has row sum " +
                               std::to_string(sum) + " >= 1");
    const double shrink = (1.0 - kRowSumTolerance) / sum;
    for (Entry& e : row) e.value *= shrink;
    if (clamped) ++*clamped;
  }
  return row;
}

struct FixedPointOperators {
  double h = 0.0;
  SparseMatrix L_bar;
  std::vector<double> f_bar;
  Index clamped_rows = 0;
};

// L_bar = dt/(h+dt) (I + hL), f_bar = h dt/(h+dt) f + h/(h+dt) phi_next.
// Without dt (stationary): L_bar = I + hL, f_bar = h f, phi_next ignored.
inline FixedPointOperators transform_fixed_point(const SparseMatrix& L, std::span<const double> f,
                                                 std::span<const double> phi_next, double h,
                                                 std::optional<double> dt) {
  if (!(h > 0.0)) throw InvalidArgument("h must be positive");
  if (dt && !(*dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (f.size() != L.rows()) throw InvalidArgument("profit vector length does not match operator");
  if (dt && phi_next.size() < L.rows()) throw InvalidArgument("next-step values too short");
  FixedPointOperators out;
  out.h = h;
  out.L_bar = SparseMatrix(L.rows(), L.cols());
  out.f_bar.resize(L.rows());
  for (Index i = 0; i < L.rows(); ++i) {
    auto r = L.row(i);
    out.L_bar.append_row(transform_row({r.begin(), r.end()}, i, h, dt, &out.clamped_rows));
    out.f_bar[i] = dt ? h * *dt / (h + *dt) * f[i] + h / (h + *dt) * phi_next[i] : h * f[i];
  }
  return out;
}

struct InterventionMatrix {
  SparseMatrix M;
  std::vector<bool> available;
};

// M^z_ij = 1{j = eta(i, z_i)} on available rows; masked rows stay empty.
// impulse_field holds indices into spec.controls.impulse.
inline InterventionMatrix assemble_intervention(const ProblemSpec& spec, const SpaceGrid& grid,
                                                std::span<const Index> impulse_field) {
  if (impulse_field.size() != grid.interior_count())
    throw InvalidArgument("impulse field length does not match interior count");
  InterventionMatrix out{SparseMatrix(grid.interior_count(), grid.size()), {}};
  out.available.resize(grid.interior_count());
  for (Index i = 0; i < grid.interior_count(); ++i) {
    out.available[i] = spec.controls.available(i);
    if (!out.available[i]) {
      out.M.append_row({});
      continue;
    }
    if (impulse_field[i] >= spec.controls.impulse.size()) throw InvalidArgument("impulse index out of range");
    const Index j = spec.intervention_index(i, spec.controls.impulse[impulse_field[i]]);
    if (j >= i)
      throw InvalidArgument("intervention row " + std::to_string(i) + " maps to column " + std::to_string(j) +
                            "; need eta(i, zeta) < i");
    out.M.append_row({{j, 1.0}});
  }
  return out;
}

}  // namespace hjbqvi
