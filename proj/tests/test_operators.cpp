#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hjbqvi/forest.hpp"
#include "hjbqvi/operators.hpp"
#include "support.hpp"

using namespace hjbqvi;
using testing_support::constant;
using testing_support::diffusion_spec;
using testing_support::gbm_spec;

namespace {

std::vector<Index> zeros(const SpaceGrid& g) { return std::vector<Index>(g.interior_count(), 0); }

double apply_row(const SparseMatrix& L, Index i, const SpaceGrid& g, const std::function<double(Point)>& psi) {
  double s = 0.0;
  for (const Entry& e : L.row(i)) s += e.value * psi(g.point(e.col));
  return s;
}

}  // namespace

TEST(Generator, ForestRow) {
  const auto spec = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(spec.domain, spec.steps);
  const auto L = assemble_generator(spec, g, 0.0, zeros(g), Scheme::central);
  ASSERT_EQ(L.rows(), 99u);
  ASSERT_EQ(L.cols(), 101u);
  for (Index i : {Index{0}, Index{9}, Index{54}, Index{98}}) {
    const double x = g.coord(i, 0);
    EXPECT_NEAR(L.at(i, i), -100.0 * x * x, 1e-9);
    EXPECT_NEAR(L.at(i, g.neighbor(i, 0, 1)), 50.0 * x * x + 5.0 * x, 1e-9);
    EXPECT_NEAR(L.at(i, g.neighbor(i, 0, -1)), 50.0 * x * x - 5.0 * x, 1e-9);
    EXPECT_EQ(L.row(i).size(), 3u);
    EXPECT_NEAR(L.row_sum(i), 0.0, 1e-9);
  }
  // Infinite horizon adds the discount on the diagonal.
  const auto inf = forest::make_infinite_spec({}, 0.1);
  const auto Li = assemble_generator(inf, g, 0.0, zeros(g), Scheme::central);
  EXPECT_NEAR(Li.at(98, 98), -100.0 * 9.9 * 9.9 - 2.0, 1e-9);
}

TEST(Generator, ZeroCoefficients) {
  const auto spec = diffusion_spec({{0.0, 1.0}, {0.0, 1.0}}, {0.25, 0.25}, constant({0, 0}), constant({0, 0, 0, 0}));
  const SpaceGrid g(spec.domain, spec.steps);
  const auto L = assemble_generator(spec, g, 0.0, zeros(g), Scheme::central);
  for (Index i = 0; i < L.rows(); ++i)
    for (const Entry& e : L.row(i)) EXPECT_EQ(e.value, 0.0);
}

TEST(Generator, CrossDerivative) {
  for (double off : {0.5, -0.5}) {
    const auto spec =
        diffusion_spec({{0.0, 1.0}, {0.0, 1.0}}, {0.125, 0.25}, constant({0, 0}), constant({1.0, off, off, 1.0}));
    const SpaceGrid g(spec.domain, spec.steps);
    const auto L = assemble_generator(spec, g, 0.0, zeros(g), Scheme::central);
    for (Index i = 0; i < g.interior_count(); ++i) {
      EXPECT_LE(L.row(i).size(), 1u + 4u + 2u);
      // 1/2 tr(A D^2 psi) for psi = x1 x2 is a_12.
      EXPECT_NEAR(apply_row(L, i, g, [](Point x) { return x[0] * x[1]; }), off, 1e-12);
      EXPECT_NEAR(apply_row(L, i, g, [](Point x) { return x[0] * x[0]; }), 1.0, 1e-12);
      EXPECT_NEAR(L.row_sum(i), 0.0, 1e-12);
      for (const Entry& e : L.row(i))
        if (e.col != i) EXPECT_GE(e.value, 0.0);
    }
  }
}

TEST(Generator, AsymmetricDiffusionRejected) {
  const auto spec =
      diffusion_spec({{0.0, 1.0}, {0.0, 1.0}}, {0.25, 0.25}, constant({0, 0}), constant({1.0, 0.5, 0.2, 1.0}));
  const SpaceGrid g(spec.domain, spec.steps);
  EXPECT_THROW(assemble_generator(spec, g, 0.0, zeros(g), Scheme::central), InvalidArgument);
  EXPECT_THROW(assemble_generator(spec, g, 0.0, std::vector<Index>(3, 0), Scheme::central), InvalidArgument);
}

// Consistency on a smooth function away from the boundary: error at a fixed
// point under refinement has order 2 (central) and 1 (one-sided).
TEST(Generator, ConsistencyOrder) {
  auto psi = [](Point x) { return std::exp(0.7 * x[0]) + x[0] * x[0] * x[0]; };
  auto exact = [](double x) {
    const double d1 = 0.7 * std::exp(0.7 * x) + 3 * x * x;
    const double d2 = 0.49 * std::exp(0.7 * x) + 6 * x;
    return 1.3 * x * d1 + 0.5 * (0.4 * x * x) * d2;
  };
  for (Scheme scheme : {Scheme::central, Scheme::one_sided}) {
    std::vector<double> errors;
    for (double dx : {0.05, 0.025, 0.0125}) {
      const auto spec = gbm_spec(4.0, dx, 1.3, std::sqrt(0.4));
      const SpaceGrid g(spec.domain, spec.steps);
      const auto L = assemble_generator(spec, g, 0.0, zeros(g), scheme);
      const Index i = g.nearest(std::vector<double>{2.0});
      errors.push_back(std::abs(apply_row(L, i, g, psi) - exact(2.0)));
    }
    const double order = std::log2(errors[1] / errors[2]);
    const double expected = scheme == Scheme::central ? 2.0 : 1.0;
    EXPECT_NEAR(order, expected, 0.15) << to_string(scheme);
    EXPECT_NEAR(std::log2(errors[0] / errors[1]), expected, 0.2) << to_string(scheme);
  }
}

TEST(Stability, ForestPassesWithEquality) {
  const auto spec = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(spec.domain, spec.steps);
  const std::vector<double> times{0.0, 1.5, 3.0};
  const auto r = check_stability(spec, g, times, Scheme::central);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_NEAR(r.worst_margin, 0.0, 1e-12);
  EXPECT_EQ(r.worst_node, 0u);
}

TEST(Stability, StrongDriftFailsAtLeftEnd) {
  const auto spec = gbm_spec(10.0, 0.1, 20.0, 1.0);
  const SpaceGrid g(spec.domain, spec.steps);
  const std::vector<double> times{0.0};
  const auto r = check_stability(spec, g, times, Scheme::central);
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(g.coord(r.worst_node, 0), 0.1, 1e-12);
  // 20 x > 10 x^2 on x < 2: interior nodes 0.1 .. 1.9.
  EXPECT_EQ(r.violations, 19u);
  EXPECT_TRUE(check_stability(spec, g, times, Scheme::one_sided).pass);
}

TEST(Stability, NoDiffusion) {
  const auto spec = diffusion_spec({{0.0, 1.0}}, {0.25}, constant({1.0}), constant({0.0}));
  const SpaceGrid g(spec.domain, spec.steps);
  const std::vector<double> times{0.0};
  EXPECT_FALSE(check_stability(spec, g, times, Scheme::central).pass);
  const auto r = check_stability(spec, g, times, Scheme::one_sided);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.worst_margin, 0.0);
  const auto still = diffusion_spec({{0.0, 1.0}}, {0.25}, constant({0.0}), constant({0.0}));
  EXPECT_TRUE(check_stability(still, g, times, Scheme::central).pass);
}

TEST(StepSize, ForestValues) {
  const auto fin = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(fin.domain, fin.steps);
  const std::vector<double> times{0.0, 3.0};
  EXPECT_NEAR(compute_h(fin, g, times, Scheme::central), 1.0 / 9801.0, 1e-15);
  EXPECT_NEAR(compute_h(fin, g, times, Scheme::central), 1.0203e-4, 1e-8);
  const auto inf = forest::make_infinite_spec({}, 0.1);
  EXPECT_NEAR(compute_h(inf, g, times, Scheme::central), 1.0 / 9803.0, 1e-15);
  // One-sided adds |mu x| / dx = 99 at x = 9.9.
  EXPECT_NEAR(compute_h(fin, g, times, Scheme::one_sided), 1.0 / 9900.0, 1e-15);
  const auto zero = diffusion_spec({{0.0, 1.0}}, {0.25}, constant({0.0}), constant({0.0}));
  const SpaceGrid gz(zero.domain, zero.steps);
  EXPECT_EQ(compute_h(zero, gz, times, Scheme::central), 1.0);
  EXPECT_EQ(compute_h(zero, gz, times, Scheme::central, 0.5), 0.5);
}

TEST(Transform, ZeroOperator) {
  SparseMatrix L(3, 5);
  for (int i = 0; i < 3; ++i) L.append_row({});
  const std::vector<double> f(3, 0.0), next(5, 0.0);
  const auto t = transform_fixed_point(L, f, next, 0.5, 0.25);
  for (Index i = 0; i < 3; ++i) {
    ASSERT_EQ(t.L_bar.row(i).size(), 1u);
    EXPECT_EQ(t.L_bar.row(i)[0].col, i);
    EXPECT_DOUBLE_EQ(t.L_bar.row(i)[0].value, 0.25 / 0.75);
    EXPECT_EQ(t.f_bar[i], 0.0);
  }
}

TEST(Transform, ProfitAndCarryOver) {
  SparseMatrix L(1, 3);
  L.append_row({{0, -2.0}, {1, 1.0}, {2, 0.5}});
  const std::vector<double> f{3.0}, next{4.0, 0.0, 0.0};
  const double h = 0.25, dt = 0.5;
  const auto t = transform_fixed_point(L, f, next, h, dt);
  EXPECT_DOUBLE_EQ(t.f_bar[0], h * dt / (h + dt) * 3.0 + h / (h + dt) * 4.0);
  EXPECT_DOUBLE_EQ(t.L_bar.at(0, 0), dt / (h + dt) * (1.0 - 0.5));
  EXPECT_DOUBLE_EQ(t.L_bar.at(0, 1), dt / (h + dt) * 0.25);
  const auto s = transform_fixed_point(L, f, {}, h, std::nullopt);
  EXPECT_DOUBLE_EQ(s.f_bar[0], 0.75);
  EXPECT_DOUBLE_EQ(s.L_bar.at(0, 0), 0.5);
}

TEST(Transform, ForestRowSums) {
  const auto fin = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(fin.domain, fin.steps);
  const std::vector<double> times{0.0};
  const double h = compute_h(fin, g, times, Scheme::central);
  const double dt = 0.001;
  const auto L = assemble_generator(fin, g, 0.0, zeros(g), Scheme::central);
  const std::vector<double> f(99, 0.0), next(101, 0.0);
  const auto t = transform_fixed_point(L, f, next, h, dt);
  EXPECT_NEAR(1.0 + h * L.at(98, 98), 0.0, 1e-12);
  EXPECT_NEAR(t.L_bar.row_sum(98), dt / (h + dt), 1e-12);
  for (Index i = 0; i < 99; ++i) {
    EXPECT_LT(t.L_bar.row_sum(i), 1.0);
    for (const Entry& e : t.L_bar.row(i)) {
      EXPECT_GE(e.value, 0.0);
      EXPECT_LT(e.value, 1.0);
    }
  }

  const auto inf = forest::make_infinite_spec({}, 0.1);
  const double hi = compute_h(inf, g, times, Scheme::central);
  const auto Li = assemble_generator(inf, g, 0.0, zeros(g), Scheme::central);
  const auto s = transform_fixed_point(Li, f, {}, hi, std::nullopt);
  for (Index i = 0; i < 99; ++i) EXPECT_NEAR(s.L_bar.row_sum(i), 1.0 - hi * 2.0, 1e-12);
}

TEST(Transform, RejectsTooLargeStep) {
  SparseMatrix L(1, 3);
  L.append_row({{0, -4.0}, {1, 2.0}, {2, 2.0}});
  const std::vector<double> f{0.0}, next(3, 0.0);
  EXPECT_THROW(transform_fixed_point(L, f, next, 0.5, 0.1), InvariantViolation);  // 1 - 0.5*4 < 0
  // Row sum 1 (no discount, stationary) is only rounding-clamped here; the
  // stationary solver rejects such rows before transforming.
  EXPECT_EQ(transform_fixed_point(L, f, {}, 0.25, std::nullopt).clamped_rows, 1u);
  SparseMatrix up(1, 3);
  up.append_row({{0, -1.0}, {1, 1.0}, {2, 0.5}});
  EXPECT_THROW(transform_fixed_point(up, f, {}, 0.25, std::nullopt), InvariantViolation);
  EXPECT_THROW(transform_fixed_point(L, f, next, 0.0, 0.1), InvalidArgument);
}

TEST(Transform, NearUnitRowIsClamped) {
  Index clamped = 0;
  const auto row = transform_row({{0, -1e-13}, {1, 0.0}}, 0, 1.0, std::nullopt, &clamped);
  EXPECT_EQ(clamped, 1u);
  double sum = 0.0;
  for (const Entry& e : row) sum += e.value;
  EXPECT_LE(sum, 1.0 - 1e-12 + 1e-16);
}

TEST(Transform, Contraction) {
  const auto fin = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(fin.domain, fin.steps);
  const std::vector<double> times{0.0};
  const double h = compute_h(fin, g, times, Scheme::central);
  const auto L = assemble_generator(fin, g, 0.0, zeros(g), Scheme::central);
  const std::vector<double> f(99, 0.0), next(101, 0.0);
  const auto t = transform_fixed_point(L, f, next, h, 0.001);
  double max_sum = 0.0;
  for (Index i = 0; i < 99; ++i) max_sum = std::max(max_sum, t.L_bar.row_sum(i));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(101), b(101);
    for (Index j = 0; j < 101; ++j) a[j] = u(rng);
    b = a;
    for (Index j = 0; j < 99; ++j) b[j] = u(rng);
    const auto la = t.L_bar.multiply(a), lb = t.L_bar.multiply(b);
    double lhs = 0.0, rhs = 0.0;
    for (Index j = 0; j < 99; ++j) lhs = std::max(lhs, std::abs(la[j] - lb[j]));
    for (Index j = 0; j < 101; ++j) rhs = std::max(rhs, std::abs(a[j] - b[j]));
    EXPECT_LE(lhs, max_sum * rhs + 1e-12);
    EXPECT_LT(lhs, rhs);
  }
}

TEST(Intervention, ForestColumn) {
  const auto spec = forest::make_finite_spec({}, 0.1, 3.0);
  const SpaceGrid g(spec.domain, spec.steps);
  const auto m = assemble_intervention(spec, g, zeros(g));
  for (Index i = 0; i < 99; ++i) {
    EXPECT_EQ(m.available[i], i > 9);
    if (i > 9) {
      ASSERT_EQ(m.M.row(i).size(), 1u);
      EXPECT_EQ(m.M.row(i)[0].col, 9u);
      EXPECT_EQ(m.M.row(i)[0].value, 1.0);
    } else {
      EXPECT_TRUE(m.M.row(i).empty());
    }
  }
}

TEST(Intervention, MaskedAndShift) {
  auto spec = diffusion_spec({{0.0, 1.0}}, {0.125}, constant({0.0}), constant({1.0}));
  const SpaceGrid g(spec.domain, spec.steps);
  const auto none = assemble_intervention(spec, g, zeros(g));
  EXPECT_EQ(none.M.nonzeros(), 0u);
  for (bool a : none.available) EXPECT_FALSE(a);

  spec.controls.impulse_available.assign(g.interior_count(), true);
  spec.controls.impulse_available[0] = false;
  spec.intervention_index = [](Index i, const ControlValue&) { return i - 1; };
  const auto shift = assemble_intervention(spec, g, zeros(g));
  for (Index i = 1; i < g.interior_count(); ++i) EXPECT_EQ(shift.M.at(i, i - 1), 1.0);
  EXPECT_EQ(shift.M.nonzeros(), g.interior_count() - 1);

  spec.intervention_index = [](Index i, const ControlValue&) { return i; };
  EXPECT_THROW(assemble_intervention(spec, g, zeros(g)), InvalidArgument);
}

TEST(SparseMatrix, TripletDump) {
  SparseMatrix m(2, 3);
  m.append_row({{2, 0.1}, {0, 1.0 / 3.0}, {2, 0.2}});
  m.append_row({});
  std::ostringstream os;
  m.write_triplets(os);
  EXPECT_EQ(os.str(), "0 0 0.33333333333333331\n0 2 0.30000000000000004\n");
}
