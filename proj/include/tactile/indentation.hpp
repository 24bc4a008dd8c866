#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "tactile/normal_map.hpp"
#include "tactile/surface.hpp"

namespace tactile {

/// Rigid sphere pressed into the membrane from the far side. `center` is in
/// grid millimetres; center.z() is the height of the sphere centre.
struct SphereProbe {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 2.5;
  double indentation = 0.0;
};

/// Places a probe at (x, y) so its apex sits `indentation` mm above the base
/// surface, i.e. pushed toward the camera by that amount.
inline SphereProbe place_probe(const SurfaceShape& shape, double x, double y, double radius, double indentation) {
  if (!(radius > 0.0)) throw ContractViolation("probe: radius must be positive");
  if (!(indentation >= 0.0)) throw ContractViolation("probe: indentation must be non-negative");
  return {Eigen::Vector3d(x, y, surface_height(shape, x, y) - radius + indentation), radius, indentation};
}

struct IndentOptions {
  bool smooth_crease = false;
  double sigma_px = 2.0;
  int band_px = 4;
};

struct IndentResult {
  RasterGrid deformed;  // heights in mm, mask = surface valid mask
  Mask contact;
  NormalMap normals;
};

/// Height of the sphere's camera-facing envelope, or NaN where the vertical
/// line through (x, y) misses the sphere.
inline double sphere_envelope(const SphereProbe& probe, double x, double y) {
  const double dx = x - probe.center.x();
  const double dy = y - probe.center.y();
  const double arg = probe.radius * probe.radius - dx * dx - dy * dy;
  if (arg < 0.0) return std::nan("");
  return probe.center.z() + std::sqrt(arg);
}

namespace detail {

// Heights -> unit normals with central differences (one-sided at mask edges).
inline Eigen::Vector3d grid_normal(const RasterGrid& h, int x, int y, double pitch) {
  auto slope = [&](int ax, int ay, int bx, int by, double c) {
    const bool a = h.values.contains(ax, ay) && h.valid(ax, ay);
    const bool b = h.values.contains(bx, by) && h.valid(bx, by);
    if (a && b) return (h(ax, ay) - h(bx, by)) / (2.0 * pitch);
    if (a) return (h(ax, ay) - c) / pitch;
    if (b) return (c - h(bx, by)) / pitch;
    return 0.0;
  };
  const double c = h(x, y);
  return normal_from_gradient(slope(x + 1, y, x - 1, y, c), slope(x, y + 1, x, y - 1, c));
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) sum += k[i + half] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

/// Presses a rigid sphere into the surface. The deformed height is the max of
/// the base height and the sphere envelope; the contact mask marks pixels
/// where the sphere is strictly higher.
inline IndentResult indent_surface(const SensorSurface& surface, const SphereProbe& probe,
                                   const IndentOptions& options = {}) {
  if (!(probe.radius > 0.0)) throw ContractViolation("probe: radius must be positive");
  if (!(probe.indentation >= 0.0)) throw ContractViolation("probe: indentation must be non-negative");

  const auto& grid = surface.grid;
  const int w = grid.width;
  const int h = grid.height;
  IndentResult out{surface.heights, Mask(w, h, 0), NormalMap(w, h)};
  out.normals.mask = surface.valid_mask();

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!surface.heights.valid(x, y)) continue;
      const double xm = grid.x_mm(x);
      const double ym = grid.y_mm(y);
      out.normals.set(x, y, surface_normal_analytic(surface.shape, xm, ym));
      if (probe.indentation == 0.0) continue;
      const double zs = sphere_envelope(probe, xm, ym);
      if (!(zs > surface.heights(x, y))) continue;
      out.deformed(x, y) = zs;
      out.contact(x, y) = 1;
      const Eigen::Vector3d d(xm - probe.center.x(), ym - probe.center.y(), zs - probe.center.z());
      out.normals.set(x, y, d.normalized());
    }
  }

  if (!options.smooth_crease || probe.indentation == 0.0) return out;

  // Band of pixels within band_px (Chebyshev) of the contact boundary.
  Mask band(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!out.contact(x, y)) continue;
      bool boundary = false;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int nx = x + dx, ny = y + dy;
        if (!out.contact.contains(nx, ny) || !out.contact(nx, ny)) boundary = true;
      }
      if (!boundary) continue;
      for (int by = std::max(0, y - options.band_px); by <= std::min(h - 1, y + options.band_px); ++by)
        for (int bx = std::max(0, x - options.band_px); bx <= std::min(w - 1, x + options.band_px); ++bx)
          band(bx, by) = 1;
    }
  }
  band = mask_and(band, surface.valid_mask());

  // Separable Gaussian of the deformed height, renormalised over valid pixels.
  const auto kernel = detail::gaussian_kernel(options.sigma_px);
  const int half = static_cast<int>(kernel.size() / 2);
  auto blur_axis = [&](const RasterGrid& in, bool horizontal) {
    RasterGrid res = in;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!in.valid(x, y)) continue;
        double acc = 0.0, wsum = 0.0;
        for (int k = -half; k <= half; ++k) {
          const int sx = horizontal ? x + k : x;
          const int sy = horizontal ? y : y + k;
          if (!in.values.contains(sx, sy) || !in.valid(sx, sy)) continue;
          acc += kernel[k + half] * in(sx, sy);
          wsum += kernel[k + half];
        }
        res(x, y) = acc / wsum;
      }
    }
    return res;
  };
  const RasterGrid blurred = blur_axis(blur_axis(out.deformed, true), false);

  RasterGrid smoothed = out.deformed;
  for (std::size_t i = 0; i < band.size(); ++i)
    if (band[i]) smoothed.values[i] = blurred.values[i];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (band(x, y)) out.normals.set(x, y, detail::grid_normal(smoothed, x, y, grid.pixel_pitch));
  out.deformed = std::move(smoothed);
  return out;
}

}  // namespace tactile
