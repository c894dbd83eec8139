#include <gtest/gtest.h>

#include <random>

#include "hjbqvi/linsolve.hpp"

using namespace hjbqvi;

namespace {

const LinearSolveOptions kDirect{LinearMethod::direct, 1e-10, 100000};
const LinearSolveOptions kSweep{LinearMethod::sweep, 1e-10, 100000};

// Random system with non-negative entries, interior row sums < 1, a few
// intervention rows pointing down, and empty boundary rows.
PolicySystem random_system(std::mt19937_64& rng, Index n_int, Index n_bnd) {
  const Index n = n_int + n_bnd;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PolicySystem s{SparseMatrix(n, n), std::vector<double>(n)};
  for (Index i = 0; i < n_int; ++i) {
    if (i > 2 && u(rng) < 0.2) {
      s.A.append_row({{static_cast<Index>(u(rng) * static_cast<double>(i)), 1.0}});
    } else {
      std::vector<Entry> row;
      const double w[3] = {u(rng), u(rng), u(rng)};
      const double row_sum = 0.1 + 0.8 * u(rng);
      const Index cols[3] = {i, i == 0 ? n_int : i - 1, i + 1 < n_int ? i + 1 : n - 1};
      for (int k = 0; k < 3; ++k) row.push_back({cols[k], row_sum * w[k] / (w[0] + w[1] + w[2])});
      s.A.append_row(row);
    }
    s.b[i] = 10.0 * (u(rng) - 0.5);
  }
  for (Index g = n_int; g < n; ++g) {
    s.A.append_row({});
    s.b[g] = u(rng);
  }
  return s;
}

}  // namespace

TEST(Linsolve, ZeroMatrix) {
  PolicySystem s{SparseMatrix(4, 4), {1.0, -2.0, 3.5, 0.25}};
  for (int i = 0; i < 4; ++i) s.A.append_row({});
  for (const auto& opt : {kDirect, kSweep}) {
    const auto sol = solve_policy_system(s, opt);
    EXPECT_EQ(sol.x, s.b);
  }
}

// Intervention chain 4 -> 2 -> 1 -> 0 ending at a continuation row: values
// telescope along the chain.
TEST(Linsolve, InterventionChainTelescopes) {
  PolicySystem s{SparseMatrix(6, 6), std::vector<double>(6)};
  s.A.append_row({{0, 0.4}, {5, 0.3}});  // continuation at 0, boundary 5
  s.A.append_row({{0, 1.0}});
  s.A.append_row({{1, 1.0}});
  s.A.append_row({{3, 0.5}, {4, 0.2}});
  s.A.append_row({{2, 1.0}});
  s.A.append_row({});
  s.b = {1.0, 0.5, -0.25, 2.0, 0.75, 3.0};
  const double phi0 = (1.0 + 0.3 * 3.0) / 0.6;
  const double phi4 = phi0 + 0.5 - 0.25 + 0.75;
  const double phi3 = (2.0 + 0.2 * phi4) / 0.5;
  for (const auto& opt : {kDirect, kSweep}) {
    const auto sol = solve_policy_system(s, opt);
    EXPECT_NEAR(sol.x[0], phi0, 1e-12);
    EXPECT_NEAR(sol.x[1], phi0 + 0.5, 1e-12);
    EXPECT_NEAR(sol.x[2], phi0 + 0.5 - 0.25, 1e-12);
    EXPECT_NEAR(sol.x[4], phi4, 1e-12);
    EXPECT_NEAR(sol.x[3], phi3, 1e-11);
    EXPECT_EQ(sol.x[5], 3.0);
  }
}

TEST(Linsolve, MethodsAgreeOnRandomSystems) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const auto s = random_system(rng, 40 + trial, 2);
    const auto d = solve_policy_system(s, kDirect);
    const auto w = solve_policy_system(s, kSweep);
    const double bound = 1e-10 * (1.0 + sup_norm(s.b));
    EXPECT_LE(d.residual, bound);
    EXPECT_LE(w.residual, bound);
    EXPECT_LE(residual_norm(s, d.x), bound);
    double diff = 0.0;
    for (Index i = 0; i < d.x.size(); ++i) diff = std::max(diff, std::abs(d.x[i] - w.x[i]));
    // Row sums <= 0.9 bound ||(I - A)^{-1}|| by 10.
    EXPECT_LE(diff, 10.0 * bound) << trial;
  }
}

TEST(Linsolve, SingularSystemFails) {
  PolicySystem s{SparseMatrix(2, 2), {1.0, 1.0}};
  s.A.append_row({{0, 1.0}});
  s.A.append_row({});
  try {
    solve_policy_system(s, kDirect);
    FAIL() << "expected failure";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("factorization failed"), std::string::npos) << e.what();
  }
  LinearSolveOptions few = kSweep;
  few.max_iter = 5;
  try {
    solve_policy_system(s, few);
    FAIL() << "expected failure";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("last residual"), std::string::npos) << e.what();
  }
}

TEST(Linsolve, DimensionMismatch) {
  PolicySystem s{SparseMatrix(2, 3), {1.0, 1.0}};
  s.A.append_row({});
  s.A.append_row({});
  EXPECT_THROW(solve_policy_system(s), InvalidArgument);
}
