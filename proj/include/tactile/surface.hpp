#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "tactile/error.hpp"
#include "tactile/raster.hpp"

namespace tactile {

enum class SurfaceKind { Plane, SphereCap, CylinderSection, EllipsoidCap };

inline const char* to_string(SurfaceKind kind) {
  switch (kind) {
    case SurfaceKind::Plane: return "plane";
    case SurfaceKind::SphereCap: return "sphere_cap";
    case SurfaceKind::CylinderSection: return "cylinder_section";
    case SurfaceKind::EllipsoidCap: return "ellipsoid_cap";
  }
  return "?";
}

inline SurfaceKind surface_kind_from_string(const std::string& s) {
  if (s == "plane") return SurfaceKind::Plane;
  if (s == "sphere_cap") return SurfaceKind::SphereCap;
  if (s == "cylinder_section") return SurfaceKind::CylinderSection;
  if (s == "ellipsoid_cap") return SurfaceKind::EllipsoidCap;
  throw ConfigError("unknown surface kind '" + s + "'");
}

/// Parametric description of the undeformed membrane (the CAD model).
/// Heights are in mm along the camera axis; the camera sits at +z.
struct SurfaceShape {
  SurfaceKind kind = SurfaceKind::Plane;
  double radius = 40.0;      // SphereCap / CylinderSection (cylinder axis along y)
  double semi_a = 30.0;      // EllipsoidCap x semi-axis
  double semi_b = 25.0;      // EllipsoidCap y semi-axis
  double semi_c = 10.0;      // EllipsoidCap z semi-axis
  double apex_height = 0.0;  // h
};

namespace detail {

// Argument of the square root for the curved kinds; negative outside the domain.
inline double domain_argument(const SurfaceShape& s, double x, double y) {
  switch (s.kind) {
    case SurfaceKind::Plane: return 1.0;
    case SurfaceKind::SphereCap: return s.radius * s.radius - x * x - y * y;
    case SurfaceKind::CylinderSection: return s.radius * s.radius - x * x;
    case SurfaceKind::EllipsoidCap: {
      const double u = x / s.semi_a;
      const double v = y / s.semi_b;
      return 1.0 - u * u - v * v;
    }
  }
  return -1.0;
}

inline double checked_root(const SurfaceShape& s, double x, double y) {
  const double arg = domain_argument(s, x, y);
  if (!(arg >= 0.0)) throw DomainError("surface: point outside the parametric domain");
  return std::sqrt(arg);
}

}  // namespace detail

/// Analytic base height z0(x, y) in mm.
inline double surface_height(const SurfaceShape& s, double x, double y) {
  switch (s.kind) {
    case SurfaceKind::Plane: return s.apex_height;
    case SurfaceKind::SphereCap:
    case SurfaceKind::CylinderSection: return s.apex_height - (s.radius - detail::checked_root(s, x, y));
    case SurfaceKind::EllipsoidCap: return s.apex_height - s.semi_c * (1.0 - detail::checked_root(s, x, y));
  }
  return 0.0;
}

/// Analytic slope (dz/dx, dz/dy). Undefined (DomainError) on the domain rim.
inline Eigen::Vector2d surface_gradient(const SurfaceShape& s, double x, double y) {
  switch (s.kind) {
    case SurfaceKind::Plane: return {0.0, 0.0};
    case SurfaceKind::SphereCap: {
      const double r = detail::checked_root(s, x, y);
      if (r <= 0.0) throw DomainError("surface: gradient undefined on the domain rim");
      return {-x / r, -y / r};
    }
    case SurfaceKind::CylinderSection: {
      const double r = detail::checked_root(s, x, y);
      if (r <= 0.0) throw DomainError("surface: gradient undefined on the domain rim");
      return {-x / r, 0.0};
    }
    case SurfaceKind::EllipsoidCap: {
      const double r = detail::checked_root(s, x, y);
      if (r <= 0.0) throw DomainError("surface: gradient undefined on the domain rim");
      return {-s.semi_c * x / (s.semi_a * s.semi_a * r), -s.semi_c * y / (s.semi_b * s.semi_b * r)};
    }
  }
  return {0.0, 0.0};
}

/// Unit normal from a height gradient, oriented toward the camera (nz > 0).
inline Eigen::Vector3d normal_from_gradient(double dzdx, double dzdy) {
  return Eigen::Vector3d(-dzdx, -dzdy, 1.0).normalized();
}

inline Eigen::Vector3d surface_normal_analytic(const SurfaceShape& s, double x, double y) {
  const Eigen::Vector2d g = surface_gradient(s, x, y);
  return normal_from_gradient(g.x(), g.y());
}

/// Pixel-centre coordinates in mm. The grid is centred on the optical axis.
struct GridGeometry {
  int width = 640;
  int height = 480;
  double pixel_pitch = 0.05;  // mm per pixel

  double x_mm(double px) const { return (px - 0.5 * (width - 1)) * pixel_pitch; }
  double y_mm(double py) const { return (py - 0.5 * (height - 1)) * pixel_pitch; }
  double px_from_mm(double x) const { return x / pixel_pitch + 0.5 * (width - 1); }
  double py_from_mm(double y) const { return y / pixel_pitch + 0.5 * (height - 1); }
};

/// The CAD surface sampled on the sensor grid. `heights` caches surface_height
/// at every valid pixel; the mask excludes pixels outside the parametric
/// domain or steeper than `min_normal_z`.
struct SensorSurface {
  SurfaceShape shape;
  GridGeometry grid;
  RasterGrid heights;
  double min_normal_z = 0.2;

  double pixel_pitch() const { return grid.pixel_pitch; }
  int width() const { return grid.width; }
  int height() const { return grid.height; }
  const Mask& valid_mask() const { return heights.mask; }
};

inline SensorSurface make_sensor_surface(const SurfaceShape& shape, const GridGeometry& grid,
                                         double min_normal_z = 0.2) {
  if (!(grid.pixel_pitch > 0.0)) throw ContractViolation("surface: pixel_pitch must be positive");
  if (grid.width <= 0 || grid.height <= 0) throw ContractViolation("surface: grid must be non-empty");
  SensorSurface out{shape, grid, RasterGrid(grid.width, grid.height, 0.0, false), min_normal_z};
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const double xm = grid.x_mm(x);
      const double ym = grid.y_mm(y);
      if (!(detail::domain_argument(shape, xm, ym) > 0.0)) continue;
      if (surface_normal_analytic(shape, xm, ym).z() < min_normal_z) continue;
      out.heights(x, y) = surface_height(shape, xm, ym);
      out.heights.mask(x, y) = 1;
    }
  }
  return out;
}

}  // namespace tactile
