#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tactile/integration.hpp"

namespace tactile {

struct GradientError {
  double gx = 0.0;
  double gy = 0.0;
  double total = 0.0;  // gx + gy, the additive convention of the comparison tables
  std::size_t pixels = 0;
};

/// Mean absolute error of p and q over `region` (intersected with both masks).
inline GradientError mae_gradients(const GradientField& estimated, const GradientField& truth, const Mask& region) {
  require(estimated.mask.same_shape(truth.mask) && region.same_shape(truth.mask), "mae_gradients: shape mismatch");
  GradientError e;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i] || !estimated.mask[i] || !truth.mask[i]) continue;
    e.gx += std::abs(estimated.p[i] - truth.p[i]);
    e.gy += std::abs(estimated.q[i] - truth.q[i]);
    ++e.pixels;
  }
  if (e.pixels == 0) throw ContractViolation("mae_gradients: empty evaluation region");
  e.gx /= static_cast<double>(e.pixels);
  e.gy /= static_cast<double>(e.pixels);
  e.total = e.gx + e.gy;
  return e;
}

inline GradientError mae_gradients(const NormalMap& estimated, const NormalMap& truth, const Mask& region,
                                   double nz_floor = kDefaultNzFloor) {
  return mae_gradients(normals_to_gradients(estimated, nz_floor), normals_to_gradients(truth, nz_floor), region);
}

/// Mean absolute depth error in mm over `region`.
inline double mae_depth(const DepthMap& estimated, const DepthMap& truth, const Mask& region) {
  require(estimated.mask.same_shape(truth.mask) && region.same_shape(truth.mask), "mae_depth: shape mismatch");
  const DepthMap a = estimated.to_millimetres();
  const DepthMap b = truth.to_millimetres();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i] || !a.mask[i] || !b.mask[i]) continue;
    sum += std::abs(a.z[i] - b.z[i]);
    ++n;
  }
  if (n == 0) throw ContractViolation("mae_depth: empty evaluation region");
  return sum / static_cast<double>(n);
}

struct GradientMetricsRow {
  std::string method;
  GradientError contact;
  GradientError all_valid;
};

struct DepthMetricsRow {
  std::string method;
  double contact_mae_mm = 0.0;
  double overall_mae_mm = 0.0;
};

struct MetricsReport {
  std::vector<GradientMetricsRow> gradient_rows;
  std::vector<DepthMetricsRow> depth_rows;
  std::size_t test_samples = 0;
  std::size_t contact_pixels = 0;
  std::size_t clamped_pixels = 0;
  std::map<std::string, double> runtimes_s;
};

}  // namespace tactile
