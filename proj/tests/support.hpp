#pragma once

#include <functional>
#include <vector>

#include "hjbqvi/problem.hpp"

namespace testing_support {

using namespace hjbqvi;

// Spec with user-supplied drift / diffusion callbacks and inert impulse data
// (masked everywhere), enough for operator-level tests.
inline ProblemSpec diffusion_spec(Box box, std::vector<double> steps, ProblemSpec::VectorField drift,
                                  ProblemSpec::VectorField diffusion_sq) {
  ProblemSpec s;
  s.domain = std::move(box);
  s.steps = std::move(steps);
  s.drift = std::move(drift);
  s.diffusion_sq = std::move(diffusion_sq);
  s.intervention_index = [](Index, const ControlValue&) -> Index { return 0; };
  s.intervention_profit = [](double, Point, const ControlValue&) { return 0.0; };
  s.boundary_value = [](double, Index, Point, std::span<const double>) { return 0.0; };
  s.terminal_value = [](Point) { return 0.0; };
  s.controls.regular = {ControlValue{}};
  s.controls.impulse = {ControlValue{}};
  const SpaceGrid g(s.domain, s.steps);
  s.controls.impulse_available.assign(g.interior_count(), false);
  return s;
}

inline ProblemSpec::VectorField constant(std::vector<double> v) {
  return [v](double, Point, const ControlValue&, std::span<double> out) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  };
}

// 1-D forest-type coefficients mu x and sigma^2 x^2.
inline ProblemSpec gbm_spec(double x_max, double dx, double mu, double sigma) {
  return diffusion_spec(
      {{0.0, x_max}}, {dx}, [mu](double, Point x, const ControlValue&, std::span<double> o) { o[0] = mu * x[0]; },
      [s2 = sigma * sigma](double, Point x, const ControlValue&, std::span<double> o) { o[0] = s2 * x[0] * x[0]; });
}

}  // namespace testing_support
