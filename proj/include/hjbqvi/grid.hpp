#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hjbqvi/error.hpp"

namespace hjbqvi {

using Index = std::size_t;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Rectangular domain, one interval per axis.
using Box = std::vector<Interval>;

class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, Index steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0)) throw InvalidArgument("time horizon must be positive");
    if (steps == 0) throw InvalidArgument("time step count must be >= 1");
    dt_ = horizon / static_cast<double>(steps);
  }

  double horizon() const { return horizon_; }
  Index steps() const { return steps_; }
  double dt() const { return dt_; }

  // t_k = k * dt, with the last node pinned to the horizon.
  double t(Index k) const {
    return k == steps_ ? horizon_ : static_cast<double>(k) * dt_;
  }

 private:
  double horizon_ = 1.0;
  Index steps_ = 1;
  double dt_ = 1.0;
};

// Uniform lattice on a box. Global indices 0..interior_count()-1 are interior
// nodes, the rest are boundary nodes; each block is ordered lexicographically
// by coordinate (axis 0 most significant).
class SpaceGrid {
 public:
  SpaceGrid() = default;

  SpaceGrid(Box box, std::vector<double> steps) : box_(std::move(box)), steps_(std::move(steps)) {
    const Index n = box_.size();
    if (n == 0) throw InvalidArgument("domain box has no axes");
    if (steps_.size() != n) throw InvalidArgument("step count does not match box dimension");

    cells_.resize(n);
    for (Index a = 0; a < n; ++a) {
      const double extent = box_[a].hi - box_[a].lo;
      if (!(extent > 0.0))
        throw InvalidArgument("axis " + std::to_string(a) + ": box extent must be positive");
      if (!(steps_[a] > 0.0))
        throw InvalidArgument("axis " + std::to_string(a) + ": step must be positive");
      const double ratio = extent / steps_[a];
      const double nearest = std::round(ratio);
      if (std::abs(ratio - nearest) > 1e-9 * std::max(1.0, ratio))
        throw InvalidArgument("axis " + std::to_string(a) + ": step " + std::to_string(steps_[a]) +
                              " does not divide extent " + std::to_string(extent));
      if (nearest < 2.0)
        throw InvalidArgument("axis " + std::to_string(a) + ": step leaves no interior node");
      cells_[a] = static_cast<Index>(nearest);
    }

    // Lattice strides, axis 0 most significant.
    stride_.assign(n, 1);
    for (Index a = n - 1; a > 0; --a) stride_[a - 1] = stride_[a] * (cells_[a] + 1);
    const Index lattice_size = stride_[0] * (cells_[0] + 1);

    std::vector<Index> interior_lattice, boundary_lattice;
    std::vector<Index> multi(n);
    for (Index l = 0; l < lattice_size; ++l) {
      decode(l, multi);
      bool on_face = false;
      for (Index a = 0; a < n; ++a) on_face = on_face || multi[a] == 0 || multi[a] == cells_[a];
      (on_face ? boundary_lattice : interior_lattice).push_back(l);
    }
    interior_count_ = interior_lattice.size();
    boundary_count_ = boundary_lattice.size();

    lattice_to_global_.assign(lattice_size, 0);
    global_to_lattice_.reserve(lattice_size);
    for (Index l : interior_lattice) {
      lattice_to_global_[l] = global_to_lattice_.size();
      global_to_lattice_.push_back(l);
    }
    for (Index l : boundary_lattice) {
      lattice_to_global_[l] = global_to_lattice_.size();
      global_to_lattice_.push_back(l);
    }

    coords_.resize(lattice_size * n);
    for (Index g = 0; g < lattice_size; ++g) {
      decode(global_to_lattice_[g], multi);
      for (Index a = 0; a < n; ++a) {
        coords_[g * n + a] = multi[a] == cells_[a]
                                 ? box_[a].hi
                                 : box_[a].lo + static_cast<double>(multi[a]) * steps_[a];
      }
    }

    // Axis-neighbour table: [interior][axis][0 = -1, 1 = +1].
    neighbors_.resize(interior_count_ * n * 2);
    for (Index i = 0; i < interior_count_; ++i) {
      const Index l = global_to_lattice_[i];
      for (Index a = 0; a < n; ++a) {
        neighbors_[(i * n + a) * 2 + 0] = lattice_to_global_[l - stride_[a]];
        neighbors_[(i * n + a) * 2 + 1] = lattice_to_global_[l + stride_[a]];
      }
    }
  }

  Index dimension() const { return box_.size(); }
  Index interior_count() const { return interior_count_; }
  Index boundary_count() const { return boundary_count_; }
  Index size() const { return interior_count_ + boundary_count_; }
  bool is_interior(Index g) const { return g < interior_count_; }

  const Box& box() const { return box_; }
  const std::vector<double>& steps() const { return steps_; }
  double step(Index axis) const { return steps_[axis]; }
  // Number of cells along an axis (interior nodes per axis = cells - 1).
  Index cells(Index axis) const { return cells_[axis]; }

  std::span<const double> point(Index g) const {
    return {coords_.data() + g * dimension(), dimension()};
  }
  double coord(Index g, Index axis) const { return coords_[g * dimension() + axis]; }

  // Global index of x_i + direction * step(axis) * e_axis, i interior.
  Index neighbor(Index i, Index axis, int direction) const {
    return neighbors_[(i * dimension() + axis) * 2 + (direction > 0 ? 1 : 0)];
  }

  // Global index of x_i + k * step(a) * e_a + l * step(b) * e_b, a != b, i interior.
  Index diagonal_neighbor(Index i, Index a, int k, Index b, int l) const {
    Index lat = global_to_lattice_[i];
    lat = k > 0 ? lat + stride_[a] : lat - stride_[a];
    lat = l > 0 ? lat + stride_[b] : lat - stride_[b];
    return lattice_to_global_[lat];
  }

  // Global index of the lattice node with the given integer coordinates.
  Index at(std::span<const Index> multi) const {
    Index l = 0;
    for (Index a = 0; a < dimension(); ++a) l += multi[a] * stride_[a];
    return lattice_to_global_[l];
  }

  // Global index of the lattice node nearest to x (clamped to the box).
  Index nearest(std::span<const double> x) const {
    Index l = 0;
    for (Index a = 0; a < dimension(); ++a) {
      double j = std::round((x[a] - box_[a].lo) / steps_[a]);
      j = std::clamp(j, 0.0, static_cast<double>(cells_[a]));
      l += static_cast<Index>(j) * stride_[a];
    }
    return lattice_to_global_[l];
  }

  // Nearest interior node to x.
  Index nearest_interior(std::span<const double> x) const {
    Index l = 0;
    for (Index a = 0; a < dimension(); ++a) {
      double j = std::round((x[a] - box_[a].lo) / steps_[a]);
      j = std::clamp(j, 1.0, static_cast<double>(cells_[a] - 1));
      l += static_cast<Index>(j) * stride_[a];
    }
    return lattice_to_global_[l];
  }

 private:
  void decode(Index l, std::vector<Index>& multi) const {
    for (Index a = 0; a < dimension(); ++a) {
      multi[a] = l / stride_[a];
      l %= stride_[a];
    }
  }

  Box box_;
  std::vector<double> steps_;
  std::vector<Index> cells_;
  std::vector<Index> stride_;
  Index interior_count_ = 0;
  Index boundary_count_ = 0;
  std::vector<Index> lattice_to_global_;
  std::vector<Index> global_to_lattice_;
  std::vector<double> coords_;
  std::vector<Index> neighbors_;
};

struct Grids {
  TimeGrid time;
  SpaceGrid space;
};

inline Grids build_grid(Box box, std::vector<double> steps, double horizon, Index time_steps) {
  TimeGrid time(horizon, time_steps);
  return {time, SpaceGrid(std::move(box), std::move(steps))};
}

}  // namespace hjbqvi
