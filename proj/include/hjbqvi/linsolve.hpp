#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/sparse.hpp"

namespace hjbqvi {

// (I - A) phi' = b over all nodes. Boundary rows of A are empty.
struct PolicySystem {
  SparseMatrix A;
  std::vector<double> b;
};

enum class LinearMethod { direct, sweep };

inline const char* to_string(LinearMethod m) { return m == LinearMethod::direct ? "direct" : "sweep"; }

struct LinearSolveOptions {
  LinearMethod method = LinearMethod::direct;
  double tol = 1e-10;
  Index max_iter = 100000;
};

struct LinearSolution {
  std::vector<double> x;
  double residual = 0.0;  // ||(I - A) x - b||_inf
  Index iterations = 0;   // sweeps; 1 for direct
};

inline double sup_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// NaN if any row residual is not finite.
inline double residual_norm(const PolicySystem& sys, std::span<const double> x) {
  double r = 0.0;
  for (Index i = 0; i < sys.A.rows(); ++i) {
    const double v = std::abs(x[i] - sys.A.row_dot(i, x) - sys.b[i]);
    if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
    r = std::max(r, v);
  }
  return r;
}

namespace detail {

inline LinearSolution solve_direct(const PolicySystem& sys, const LinearSolveOptions& opt) {
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  const Index n = sys.A.rows();
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(sys.A.nonzeros() + n);
  for (Index i = 0; i < n; ++i) {
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
    for (const Entry& e : sys.A.row(i))
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(e.col), -e.value);
  }
  SpMat m(static_cast<int>(n), static_cast<int>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();

  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(m);
  lu.factorize(m);
  if (lu.info() != Eigen::Success)
    throw SolverError("policy system factorization failed: " + lu.lastErrorMessage());

  const Eigen::Map<const Eigen::VectorXd> rhs(sys.b.data(), static_cast<Eigen::Index>(n));
  Eigen::VectorXd x = lu.solve(rhs);
  LinearSolution out;
  out.x.assign(x.data(), x.data() + n);
  out.iterations = 1;
  out.residual = residual_norm(sys, out.x);
  // One step of iterative refinement if rounding left us outside the contract.
  const double target = opt.tol * (1.0 + sup_norm(sys.b));
  if (out.residual > target) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (Index i = 0; i < n; ++i) r[i] = sys.b[i] - (out.x[i] - sys.A.row_dot(i, out.x));
    Eigen::VectorXd dx = lu.solve(r);
    for (Index i = 0; i < n; ++i) out.x[i] += dx[i];
    out.residual = residual_norm(sys, out.x);
    ++out.iterations;
  }
  return out;
}

// Gauss-Seidel in index order. Intervention rows point to lower indices, so a
// chain is resolved within a single sweep once its continuation end is.
inline LinearSolution solve_sweep(const PolicySystem& sys, const LinearSolveOptions& opt) {
  const Index n = sys.A.rows();
  const double target = opt.tol * (1.0 + sup_norm(sys.b));
  LinearSolution out;
  out.x = sys.b;
  for (Index it = 1; it <= opt.max_iter; ++it) {
    for (Index i = 0; i < n; ++i) {
      double off = 0.0, diag = 0.0;
      for (const Entry& e : sys.A.row(i)) {
        if (e.col == i)
          diag = e.value;
        else
          off += e.value * out.x[e.col];
      }
      out.x[i] = (sys.b[i] + off) / (1.0 - diag);
    }
    out.iterations = it;
    out.residual = residual_norm(sys, out.x);
    if (!std::isfinite(out.residual)) break;
    if (out.residual <= target) return out;
  }
  throw SolverError("sweep did not converge after " + std::to_string(out.iterations) +
                    " iterations; last residual " + std::to_string(out.residual));
}

}  // namespace detail

inline LinearSolution solve_policy_system(const PolicySystem& sys, const LinearSolveOptions& opt = {}) {
  if (sys.A.rows() != sys.A.cols() || sys.b.size() != sys.A.rows())
    throw InvalidArgument("policy system dimensions are inconsistent");
  LinearSolution out = opt.method == LinearMethod::direct ? detail::solve_direct(sys, opt)
                                                          : detail::solve_sweep(sys, opt);
  if (!(out.residual <= opt.tol * (1.0 + sup_norm(sys.b))))
    throw SolverError("policy system residual " + std::to_string(out.residual) + " exceeds tolerance");
  return out;
}

}  // namespace hjbqvi
