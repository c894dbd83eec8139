#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/grid.hpp"
#include "hjbqvi/linsolve.hpp"
#include "hjbqvi/operators.hpp"
#include "hjbqvi/problem.hpp"
#include "hjbqvi/sparse.hpp"

namespace hjbqvi {

// phi_i = Phi(x_i) over interior then boundary nodes.
using ValueField = std::vector<double>;

struct PolicyField {
  std::vector<Index> regular;  // index into controls.regular
  std::vector<Index> impulse;  // index into controls.impulse; meaningful where the impulse is available
  std::vector<bool> continuation;
};

struct SolverOptions {
  Scheme scheme = Scheme::central;
  // Admissible change per sweep is tol * (1 + ||phi^{k+1}||_inf) for a time
  // step and tol * (1 + ||phi||_inf) in stationary mode.
  double tol = 1e-8;
  Index max_sweeps = 1000;
  LinearSolveOptions linear{};
  double h_cap = 1.0;
  bool require_stability = true;
  bool cold_start = false;  // diagnostic: start each step from zero instead of phi^{k+1}
  bool check_invariants = true;
  bool keep_trajectory = true;
};

struct StepReport {
  Index k = 0;
  Index iterations = 0;
  double final_change = 0.0;
  double tolerance = 0.0;
  double linear_residual = 0.0;
  double seconds = 0.0;
  std::vector<double> change_history;
  // Filled when check_invariants is set.
  double qvi_residual = 0.0;         // max_i |phi_i - max(branches)|
  double dominance_violation = 0.0;  // max_i max(branch - phi_i, 0)
  double sup_norm = 0.0;             // interior sup norm of phi^k
  double stability_bound = std::numeric_limits<double>::infinity();
};

struct SolveReport {
  std::vector<StepReport> steps;
  double h = 0.0;
  Index total_iterations = 0;
  Index max_step_iterations = 0;
  double max_sup_norm = 0.0;
  Index clamped_rows = 0;
  StabilityReport stability;
  bool invariants_ok = true;
  double seconds = 0.0;
};

// Transformed operators for one time step (or the stationary problem),
// cached per regular control so sweeps only apply them.
class StepOperators {
 public:
  StepOperators(const ProblemSpec& spec, const SpaceGrid& grid, double t, double h, std::optional<double> dt,
                Scheme scheme)
      : t_(t), h_(h), dt_(dt) {
    const Index n_int = grid.interior_count();
    const Index n_ctrl = spec.controls.regular.size();
    phi_weight_ = dt ? h / (h + *dt) : 0.0;
    const double f_weight = dt ? h * *dt / (h + *dt) : h;
    LocalCoefficients c(grid.dimension());
    L_bar_.reserve(n_ctrl);
    f_bar_.assign(n_ctrl, std::vector<double>(n_int));
    f_raw_.assign(n_ctrl, std::vector<double>(n_int));
    for (Index ci = 0; ci < n_ctrl; ++ci) {
      const auto& alpha = spec.controls.regular[ci];
      SparseMatrix m(n_int, grid.size());
      for (Index i = 0; i < n_int; ++i) {
        evaluate_coefficients(spec, t, grid.point(i), alpha, c);
        auto row = generator_row(grid, i, c, scheme);
        if (!dt) {
          double sum = 0.0;
          for (const Entry& e : row) sum += e.value;
          if (!(h * sum < -kRowSumTolerance))
            throw InvariantViolation("stationary mode requires contraction: generator row " + std::to_string(i) +
                                     " has row sum " + std::to_string(sum) + " (no discount)");
        }
        m.append_row(transform_row(std::move(row), i, h, dt, &clamped_rows_));
        const double f = spec.running_profit ? spec.running_profit(t, grid.point(i), alpha) : 0.0;
        f_raw_[ci][i] = f;
        f_bar_[ci][i] = f_weight * f;
      }
      L_bar_.push_back(std::move(m));
    }

    const Index n_imp = spec.controls.impulse.size();
    available_.resize(n_int);
    target_.assign(n_imp, std::vector<Index>(n_int, 0));
    K_.assign(n_imp, std::vector<double>(n_int, 0.0));
    for (Index i = 0; i < n_int; ++i) {
      available_[i] = spec.controls.available(i);
      if (!available_[i]) continue;
      for (Index zi = 0; zi < n_imp; ++zi) {
        const auto& z = spec.controls.impulse[zi];
        const Index j = spec.intervention_index(i, z);
        if (j >= i)
          throw InvalidArgument("intervention row " + std::to_string(i) + " maps to " + std::to_string(j) +
                                "; need eta(i, zeta) < i");
        target_[zi][i] = j;
        K_[zi][i] = spec.intervention_profit(t, grid.point(i), z);
      }
    }
  }

  double t() const { return t_; }
  double h() const { return h_; }
  std::optional<double> dt() const { return dt_; }
  Index regular_count() const { return L_bar_.size(); }
  Index impulse_count() const { return K_.size(); }
  Index clamped_rows() const { return clamped_rows_; }
  bool available(Index i) const { return available_[i]; }
  const SparseMatrix& L_bar(Index control) const { return L_bar_[control]; }
  Index target(Index zeta, Index i) const { return target_[zeta][i]; }
  double K(Index zeta, Index i) const { return K_[zeta][i]; }
  double f(Index control, Index i) const { return f_raw_[control][i]; }

  // (L_bar phi)_i + f_bar_i under the given control.
  double continuation_value(Index control, Index i, std::span<const double> phi,
                            std::span<const double> phi_next) const {
    double v = L_bar_[control].row_dot(i, phi) + f_bar_[control][i];
    if (dt_) v += phi_weight_ * phi_next[i];
    return v;
  }
  double f_bar(Index control, Index i, std::span<const double> phi_next) const {
    return f_bar_[control][i] + (dt_ ? phi_weight_ * phi_next[i] : 0.0);
  }
  double impulse_value(Index zeta, Index i, std::span<const double> phi) const {
    return phi[target_[zeta][i]] + K_[zeta][i];
  }

 private:
  double t_;
  double h_;
  std::optional<double> dt_;
  double phi_weight_ = 0.0;
  std::vector<SparseMatrix> L_bar_;
  std::vector<std::vector<double>> f_bar_;
  std::vector<std::vector<double>> f_raw_;
  std::vector<bool> available_;
  std::vector<std::vector<Index>> target_;
  std::vector<std::vector<double>> K_;
  Index clamped_rows_ = 0;
};

// Row-wise argmax of both branches. Ties go to the lowest control index and
// the continuation branch wins ties against the impulse.
inline PolicyField policy_improvement(std::span<const double> phi, std::span<const double> phi_next,
                                      const StepOperators& ops) {
  const Index n_int = ops.L_bar(0).rows();
  PolicyField p;
  p.regular.assign(n_int, 0);
  p.impulse.assign(n_int, 0);
  p.continuation.assign(n_int, true);
  for (Index i = 0; i < n_int; ++i) {
    double best_cont = ops.continuation_value(0, i, phi, phi_next);
    for (Index c = 1; c < ops.regular_count(); ++c) {
      const double v = ops.continuation_value(c, i, phi, phi_next);
      if (v > best_cont) {
        best_cont = v;
        p.regular[i] = c;
      }
    }
    if (!ops.available(i)) continue;
    double best_imp = ops.impulse_value(0, i, phi);
    for (Index z = 1; z < ops.impulse_count(); ++z) {
      const double v = ops.impulse_value(z, i, phi);
      if (v > best_imp) {
        best_imp = v;
        p.impulse[i] = z;
      }
    }
    p.continuation[i] = best_cont >= best_imp;
  }
  return p;
}

inline void refresh_boundary(const ProblemSpec& spec, const SpaceGrid& grid, double t, std::vector<double>& phi) {
  const Index n_int = grid.interior_count();
  std::vector<double> psi(grid.boundary_count());
  for (Index b = 0; b < psi.size(); ++b) psi[b] = spec.boundary_value(t, n_int + b, grid.point(n_int + b), phi);
  std::copy(psi.begin(), psi.end(), phi.begin() + static_cast<std::ptrdiff_t>(n_int));
}

// A and b of the policy system for the given policy.
inline PolicySystem build_policy_system(const StepOperators& ops, const PolicyField& policy,
                                        std::span<const double> phi_with_boundary,
                                        std::span<const double> phi_next, const SpaceGrid& grid) {
  const Index n_int = grid.interior_count();
  PolicySystem sys{SparseMatrix(grid.size(), grid.size()), std::vector<double>(grid.size())};
  for (Index i = 0; i < n_int; ++i) {
    if (policy.continuation[i]) {
      auto r = ops.L_bar(policy.regular[i]).row(i);
      sys.A.append_row({r.begin(), r.end()});
      sys.b[i] = ops.f_bar(policy.regular[i], i, phi_next);
    } else {
      sys.A.append_row({{ops.target(policy.impulse[i], i), 1.0}});
      sys.b[i] = ops.K(policy.impulse[i], i);
    }
  }
  for (Index g = n_int; g < grid.size(); ++g) {
    sys.A.append_row({});
    sys.b[g] = phi_with_boundary[g];
  }
  return sys;
}

struct StepResult {
  ValueField phi;
  PolicyField policy;
  StepReport report;
};

namespace detail {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Policy iteration at fixed t: steps 2-5 until the sup-norm change is below
// tolerance. A negative fixed_tol means tol * (1 + ||phi'||_inf).
inline StepResult policy_iteration(const ProblemSpec& spec, const SpaceGrid& grid, const StepOperators& ops,
                                   ValueField phi, std::span<const double> phi_next, double fixed_tol,
                                   const SolverOptions& opt) {
  const auto start = std::chrono::steady_clock::now();
  StepResult out;
  for (Index it = 1;; ++it) {
    ValueField previous = phi;
    refresh_boundary(spec, grid, ops.t(), phi);
    out.policy = policy_improvement(phi, phi_next, ops);
    const PolicySystem sys = build_policy_system(ops, out.policy, phi, phi_next, grid);
    LinearSolution sol = solve_policy_system(sys, opt.linear);
    for (double v : sol.x)
      if (!std::isfinite(v)) throw SolverError("non-finite value in policy system solution");
    const double change = max_abs_diff(sol.x, previous);
    const double tol = fixed_tol >= 0.0 ? fixed_tol : opt.tol * (1.0 + sup_norm(sol.x));
    phi = std::move(sol.x);
    out.report.change_history.push_back(change);
    out.report.iterations = it;
    out.report.final_change = change;
    out.report.tolerance = tol;
    out.report.linear_residual = sol.residual;
    if (change <= tol) break;
    if (it >= opt.max_sweeps) {
      std::string history;
      const Index from = out.report.change_history.size() > 8 ? out.report.change_history.size() - 8 : 0;
      for (Index j = from; j < out.report.change_history.size(); ++j)
        history += (j > from ? ", " : "") + std::to_string(out.report.change_history[j]);
      throw SolverError("policy iteration did not converge in " + std::to_string(opt.max_sweeps) +
                        " sweeps at t=" + std::to_string(ops.t()) + "; last changes: " + history);
    }
  }
  out.phi = std::move(phi);
  out.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// Sum of |K| along the impulse chain starting at i, following the policy
// until a continuation row is reached.
inline double chain_profit(const StepOperators& ops, const PolicyField& p, Index i) {
  double s = 0.0;
  while (!p.continuation[i]) {
    s += std::abs(ops.K(p.impulse[i], i));
    i = ops.target(p.impulse[i], i);
  }
  return s;
}

inline void fill_diagnostics(const ProblemSpec& spec, const SpaceGrid& grid, const StepOperators& ops,
                             StepResult& step, std::span<const double> phi_next) {
  const Index n_int = grid.interior_count();
  std::vector<double> phi = step.phi;
  refresh_boundary(spec, grid, ops.t(), phi);
  const PolicyField best = policy_improvement(phi, phi_next, ops);
  double residual = 0.0, violation = 0.0, norm = 0.0;
  for (Index i = 0; i < n_int; ++i) {
    const double cont = ops.continuation_value(best.regular[i], i, phi, phi_next);
    const double imp = ops.available(i) ? ops.impulse_value(best.impulse[i], i, phi)
                                        : -std::numeric_limits<double>::infinity();
    residual = std::max(residual, std::abs(phi[i] - std::max(cont, imp)));
    violation = std::max({violation, cont - phi[i], imp - phi[i]});
    norm = std::max(norm, std::abs(phi[i]));
  }
  step.report.qvi_residual = residual;
  step.report.dominance_violation = violation;
  step.report.sup_norm = norm;

  // Sup-norm stability bound: |dt f| + ||phi^{k+1}|| + sum_boundary |dt L_ib psi_b|
  // + the largest |K| sum along an intervention chain.
  if (!ops.dt()) return;
  const double dt = *ops.dt();
  const double h = ops.h();
  const double unscale = (h + dt) / (dt * h);  // L_ij = L_bar_ij * (h + dt) / (dt h), j != i
  double f_term = 0.0, boundary_term = 0.0, chain_term = 0.0;
  const PolicyField& p = step.policy;
  for (Index i = 0; i < n_int; ++i) {
    f_term = std::max(f_term, std::abs(dt * ops.f(p.regular[i], i)));
    double bsum = 0.0;
    for (const Entry& e : ops.L_bar(p.regular[i]).row(i))
      if (e.col >= n_int) bsum += std::abs(dt * e.value * unscale * phi[e.col]);
    boundary_term = std::max(boundary_term, bsum);
    if (!p.continuation[i]) chain_term = std::max(chain_term, chain_profit(ops, p, i));
  }
  step.report.stability_bound = f_term + sup_norm(phi_next) + boundary_term + chain_term;
}

inline bool step_invariants_hold(const StepReport& r) {
  const double slack = 10.0 * r.tolerance;
  return r.qvi_residual <= slack && r.dominance_violation <= slack &&
         r.sup_norm <= r.stability_bound * (1.0 + 1e-12) + slack;
}

}  // namespace detail

// Time-node list t_0..t_N used for stability checks and h.
inline std::vector<double> time_nodes(const TimeGrid& tg) {
  std::vector<double> ts(tg.steps() + 1);
  for (Index k = 0; k <= tg.steps(); ++k) ts[k] = tg.t(k);
  return ts;
}

// One backward step: warm start phi^k := phi^{k+1}, then policy iteration.
inline StepResult solve_time_step(const ProblemSpec& spec, const Grids& grids, Index k,
                                  std::span<const double> phi_next, double h, const SolverOptions& opt = {}) {
  if (k >= grids.time.steps()) throw InvalidArgument("time index out of range");
  if (phi_next.size() != grids.space.size()) throw InvalidArgument("phi^{k+1} has wrong length");
  const StepOperators ops(spec, grids.space, grids.time.t(k), h, grids.time.dt(), opt.scheme);
  ValueField start = opt.cold_start ? ValueField(grids.space.size(), 0.0)
                                    : ValueField(phi_next.begin(), phi_next.end());
  const double tol = opt.tol * (1.0 + sup_norm(phi_next));
  StepResult out = detail::policy_iteration(spec, grids.space, ops, std::move(start), phi_next, tol, opt);
  out.report.k = k;
  if (opt.check_invariants) detail::fill_diagnostics(spec, grids.space, ops, out, phi_next);
  return out;
}

struct BackwardSolution {
  std::vector<ValueField> values;      // k = 0..N^t when keep_trajectory, else {phi^0}
  std::vector<PolicyField> policies;   // k = 0..N^t-1 when keep_trajectory, else {policy^0}
  SolveReport report;

  const ValueField& initial() const { return values.front(); }
  const PolicyField& policy(Index k) const { return policies[k]; }
};

inline SolveReport prepare_report(const ProblemSpec& spec, const SpaceGrid& grid, std::span<const double> times,
                                  const SolverOptions& opt) {
  validate_spec(spec, grid);
  SolveReport report;
  report.stability = check_stability(spec, grid, times, opt.scheme);
  if (opt.require_stability && !report.stability.pass)
    throw InvalidArgument(std::string("stability condition violated (") + to_string(opt.scheme) +
                          ") at interior node " + std::to_string(report.stability.worst_node) + ", t=" +
                          std::to_string(report.stability.worst_time) + ", relative margin " +
                          std::to_string(report.stability.worst_margin));
  report.h = compute_h(spec, grid, times, opt.scheme, opt.h_cap);
  return report;
}

// Backward induction k = N^t-1 .. 0 from phi^{N^t} = g on every node.
inline BackwardSolution solve_backward(const ProblemSpec& spec, const Grids& grids, const SolverOptions& opt = {}) {
  if (!spec.terminal_value) throw InvalidArgument("terminal_value is required");
  const auto start = std::chrono::steady_clock::now();
  const SpaceGrid& grid = grids.space;
  const auto times = time_nodes(grids.time);
  BackwardSolution sol;
  sol.report = prepare_report(spec, grid, times, opt);

  ValueField phi(grid.size());
  for (Index g = 0; g < grid.size(); ++g) phi[g] = spec.terminal_value(grid.point(g));
  for (double v : phi)
    if (!std::isfinite(v)) throw InvalidArgument("terminal values must be finite");

  const Index N = grids.time.steps();
  if (opt.keep_trajectory) {
    sol.values.resize(N + 1);
    sol.policies.resize(N);
    sol.values[N] = phi;
  }
  sol.report.steps.resize(N);
  for (Index kk = N; kk-- > 0;) {
    StepResult step;
    try {
      const StepOperators ops(spec, grid, grids.time.t(kk), sol.report.h, grids.time.dt(), opt.scheme);
      sol.report.clamped_rows += ops.clamped_rows();
      ValueField init = opt.cold_start ? ValueField(grid.size(), 0.0) : phi;
      const double tol = opt.tol * (1.0 + sup_norm(phi));
      step = detail::policy_iteration(spec, grid, ops, std::move(init), phi, tol, opt);
      step.report.k = kk;
      if (opt.check_invariants) {
        detail::fill_diagnostics(spec, grid, ops, step, phi);
        sol.report.invariants_ok = sol.report.invariants_ok && detail::step_invariants_hold(step.report);
      }
    } catch (const SolverError& e) {
      throw SolverError("time step k=" + std::to_string(kk) + ": " + e.what());
    }
    sol.report.total_iterations += step.report.iterations;
    sol.report.max_step_iterations = std::max(sol.report.max_step_iterations, step.report.iterations);
    sol.report.max_sup_norm = std::max(sol.report.max_sup_norm, sup_norm(step.phi));
    phi = std::move(step.phi);
    if (opt.keep_trajectory) {
      sol.values[kk] = phi;
      sol.policies[kk] = std::move(step.policy);
    } else if (kk == 0) {
      sol.values = {phi};
      sol.policies = {std::move(step.policy)};
    }
    sol.report.steps[kk] = std::move(step.report);
  }
  sol.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

struct StationarySolution {
  ValueField phi;
  PolicyField policy;
  SolveReport report;  // one StepReport

  Index iterations() const { return report.total_iterations; }
};

// Infinite-horizon variant: L_bar = I + hL, f_bar = h f, phi^0 = 0. Requires a
// strictly negative generator row sum (discount) so the transform contracts.
inline StationarySolution solve_stationary(const ProblemSpec& spec, const SpaceGrid& grid,
                                           const SolverOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<double> times{0.0};
  StationarySolution sol;
  sol.report = prepare_report(spec, grid, times, opt);
  const StepOperators ops(spec, grid, 0.0, sol.report.h, std::nullopt, opt.scheme);
  sol.report.clamped_rows = ops.clamped_rows();
  StepResult step = detail::policy_iteration(spec, grid, ops, ValueField(grid.size(), 0.0), {}, -1.0, opt);
  if (opt.check_invariants) {
    detail::fill_diagnostics(spec, grid, ops, step, {});
    sol.report.invariants_ok = detail::step_invariants_hold(step.report);
  }
  sol.report.total_iterations = step.report.iterations;
  sol.report.max_step_iterations = step.report.iterations;
  sol.report.max_sup_norm = sup_norm(step.phi);
  sol.phi = std::move(step.phi);
  refresh_boundary(spec, grid, 0.0, sol.phi);
  sol.policy = std::move(step.policy);
  sol.report.steps.push_back(std::move(step.report));
  sol.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

// Smallest interior coordinate (1-D) outside the continuation set.
inline std::optional<double> extract_switch_point(const PolicyField& policy, const SpaceGrid& grid) {
  if (grid.dimension() != 1) throw InvalidArgument("switch point is defined for 1-D grids only");
  for (Index i = 0; i < grid.interior_count(); ++i)
    if (!policy.continuation[i]) return grid.coord(i, 0);
  return std::nullopt;
}

}  // namespace hjbqvi
