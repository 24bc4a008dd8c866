#pragma once

#include <cmath>

#include <Eigen/Core>

#include "tactile/raster.hpp"

namespace tactile {

/// Per-pixel unit normals. Valid pixels satisfy |n| = 1 and nz > 0.
struct NormalMap {
  Grid<double> nx, ny, nz;
  Mask mask;

  NormalMap() = default;
  NormalMap(int width, int height)
      : nx(width, height, 0.0), ny(width, height, 0.0), nz(width, height, 1.0), mask(width, height, 0) {}

  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }

  Eigen::Vector3d at(int x, int y) const { return {nx(x, y), ny(x, y), nz(x, y)}; }
  void set(int x, int y, const Eigen::Vector3d& n) {
    nx(x, y) = n.x();
    ny(x, y) = n.y();
    nz(x, y) = n.z();
  }

  bool satisfies_invariants(double tolerance = 1e-6) const {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      const double norm2 = nx[i] * nx[i] + ny[i] * ny[i] + nz[i] * nz[i];
      if (!(std::abs(norm2 - 1.0) <= tolerance) || !(nz[i] > 0.0)) return false;
    }
    return true;
  }

  friend bool operator==(const NormalMap&, const NormalMap&) = default;
};

}  // namespace tactile
