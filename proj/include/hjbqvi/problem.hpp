#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hjbqvi/error.hpp"
#include "hjbqvi/grid.hpp"

namespace hjbqvi {

using Point = std::span<const double>;

// A regular control alpha in U or an impulse parameter zeta in Z_delta.
// Problems without a regular control use a single empty value.
using ControlValue = std::vector<double>;

struct ControlSets {
  std::vector<ControlValue> regular;
  std::vector<ControlValue> impulse;
  // Per interior node; empty means the impulse is available everywhere.
  std::vector<bool> impulse_available;

  bool available(Index i) const { return impulse_available.empty() || impulse_available[i]; }
};

// Combined impulse / stochastic control problem on a bounded box.
//
// The lattice (domain, steps) is part of the problem because the intervention
// index map refers to grid indices. Discounting is the caller's business: fold
// it into the profits (finite horizon) or supply discount_rate, which enters
// the generator diagonal as -rate (stationary problems).
struct ProblemSpec {
  using VectorField = std::function<void(double t, Point x, const ControlValue& a, std::span<double> out)>;
  using ScalarField = std::function<double(double t, Point x, const ControlValue& a)>;

  Box domain;
  std::vector<double> steps;

  VectorField drift;         // mu, length n
  VectorField diffusion_sq;  // sigma sigma^T, n x n row-major, symmetric
  ScalarField running_profit;  // f; empty means 0
  ScalarField discount_rate;   // empty means 0

  // eta(i, zeta): interior index reached by the impulse from interior node i.
  std::function<Index(Index i, const ControlValue& zeta)> intervention_index;
  ScalarField intervention_profit;  // K(t, x, zeta)

  // psi(t, x_b; phi). phi is the current iterate over all nodes.
  std::function<double(double t, Index g, Point x, std::span<const double> phi)> boundary_value;

  // g(x): bequest / terminal condition.
  std::function<double(Point x)> terminal_value;

  ControlSets controls;

  // Time-independent coefficients; required by the stationary solver.
  bool stationary = false;

  Index dimension() const { return domain.size(); }
};

// Checks what can be checked without solving: control lists, mask size,
// intervention ordering (eta(i, zeta) < i wherever the impulse is available).
inline void validate_spec(const ProblemSpec& spec, const SpaceGrid& grid) {
  if (spec.dimension() != grid.dimension())
    throw InvalidArgument("problem dimension does not match grid");
  if (!spec.drift || !spec.diffusion_sq) throw InvalidArgument("drift and diffusion_sq are required");
  if (!spec.intervention_index || !spec.intervention_profit)
    throw InvalidArgument("intervention_index and intervention_profit are required");
  if (!spec.boundary_value) throw InvalidArgument("boundary_value is required");
  if (spec.controls.regular.empty()) throw InvalidArgument("regular control set is empty");
  if (spec.controls.impulse.empty()) throw InvalidArgument("impulse control set is empty");
  const auto& mask = spec.controls.impulse_available;
  if (!mask.empty() && mask.size() != grid.interior_count())
    throw InvalidArgument("impulse mask length " + std::to_string(mask.size()) +
                          " does not match interior count " + std::to_string(grid.interior_count()));
  for (Index i = 0; i < grid.interior_count(); ++i) {
    if (!spec.controls.available(i)) continue;
    for (const auto& z : spec.controls.impulse) {
      const Index target = spec.intervention_index(i, z);
      if (target >= i)
        throw InvalidArgument("intervention from interior node " + std::to_string(i) + " maps to " +
                              std::to_string(target) + "; need eta(i, zeta) < i");
    }
  }
}

}  // namespace hjbqvi
