#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tactile/integration.hpp"

namespace tactile {

/// One point per valid pixel: (x * pitch, y * pitch, depth in mm).
inline std::vector<Eigen::Vector3d> depth_to_pointcloud(const DepthMap& depth, double pixel_pitch) {
  if (!(pixel_pitch > 0.0)) throw ContractViolation("depth_to_pointcloud: pixel_pitch must be positive");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(count(depth.mask));
  const double zscale = depth.unit == DepthUnit::GridUnits ? pixel_pitch : 1.0;
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (depth.mask(x, y)) pts.emplace_back(x * pixel_pitch, y * pixel_pitch, depth.z(x, y) * zscale);
  return pts;
}

/// ASCII PLY with float x/y/z vertices, six decimals.
inline std::string ply_text(const std::vector<Eigen::Vector3d>& points) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %.6f\n", p.x(), p.y(), p.z());
    out += buf;
  }
  return out;
}

inline void write_ply(const std::string& path, const std::vector<Eigen::Vector3d>& points) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << ply_text(points);
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace tactile
