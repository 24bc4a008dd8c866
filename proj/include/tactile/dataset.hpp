#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "tactile/indentation.hpp"
#include "tactile/integration.hpp"
#include "tactile/render.hpp"

namespace tactile {

enum class Split { Train, Test };

struct CalibrationSample {
  TactileFrame frame;
  NormalMap gt_normals;
  Mask contact_mask;
  RasterGrid deformed_heights;  // mm, ground-truth depth of the pressed membrane
  SphereProbe probe;
  DepthPrior z_prior_edge;
};

struct DatasetOptions {
  double probe_radius = 2.5;  // 5.0 mm diameter ball
  double indentation_min = 0.3;
  double indentation_max = 1.0;
  double test_fraction = 0.2;
  int prior_band_width = 10;
  double prior_weight = 1.0;
  IndentOptions indent;
};

struct CalibrationDataset {
  std::vector<CalibrationSample> samples;
  std::vector<Split> split;
  SensorSurface surface;
  CameraModel camera;
  RenderConfig render_config;
  DatasetOptions options;
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == which) out.push_back(i);
    return out;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

}  // namespace detail

/// Seed of sample `index`; each sample depends only on (seed, index).
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ (0xD1B54A32D192ED03ull * (index + 1)));
}

/// Split rule: sample i is held out when floor((i + 1) f) > floor(i f).
inline Split split_for_index(std::size_t index, double test_fraction) {
  const auto a = std::floor(static_cast<double>(index) * test_fraction + 1e-9);
  const auto b = std::floor(static_cast<double>(index + 1) * test_fraction + 1e-9);
  return b > a ? Split::Test : Split::Train;
}

/// Renders one probe press: indentation, shading, ground truth and edge prior.
inline CalibrationSample render_sample(const SensorSurface& surface, const CameraModel& camera,
                                       const RenderConfig& config, const SphereProbe& probe,
                                       const DatasetOptions& options, std::uint64_t noise_seed) {
  IndentResult ind = indent_surface(surface, probe, options.indent);
  RenderConfig cfg = config;
  cfg.rng_seed = noise_seed;
  CalibrationSample s;
  s.frame = render_frame(ind.deformed, ind.normals, camera, cfg, surface.grid);
  s.gt_normals = std::move(ind.normals);
  s.contact_mask = mask_and(ind.contact, s.frame.mask);
  s.deformed_heights = std::move(ind.deformed);
  s.probe = probe;
  s.z_prior_edge = extract_boundary_prior(surface, s.frame.mask, options.prior_band_width, options.prior_weight);
  return s;
}

/// Probe placements follow a rotated Halton (2, 3) sequence over the valid
/// region, inset so the contact stays clear of the prior band.
inline CalibrationDataset generate_calibration_dataset(const SensorSurface& surface, const CameraModel& camera,
                                                       const RenderConfig& config, std::size_t n_samples,
                                                       const DatasetOptions& options, std::uint64_t seed) {
  if (n_samples < 1) throw ContractViolation("generate_calibration_dataset: n_samples must be >= 1");
  if (!(options.indentation_min >= 0.0 && options.indentation_max >= options.indentation_min))
    throw ContractViolation("generate_calibration_dataset: invalid indentation range");
  if (!(options.indentation_max < options.probe_radius))
    throw ContractViolation("generate_calibration_dataset: indentation must stay below the probe radius");
  if (!(options.test_fraction >= 0.0 && options.test_fraction < 1.0))
    throw ContractViolation("generate_calibration_dataset: test_fraction must lie in [0, 1)");
  camera.validate();
  config.validate();

  const auto& grid = surface.grid;
  const Mask& valid = surface.valid_mask();
  int x0 = grid.width, x1 = -1, y0 = grid.height, y1 = -1;
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x)
      if (valid(x, y)) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) throw ContractViolation("generate_calibration_dataset: surface has no valid pixels");
  const double reach = std::sqrt(2.0 * options.probe_radius * options.indentation_max -
                                  options.indentation_max * options.indentation_max);
  const double margin = reach + options.prior_band_width * grid.pixel_pitch;
  const double xmin = grid.x_mm(x0) + margin, xmax = grid.x_mm(x1) - margin;
  const double ymin = grid.y_mm(y0) + margin, ymax = grid.y_mm(y1) - margin;
  if (!(xmax >= xmin && ymax >= ymin)) throw ContractViolation("generate_calibration_dataset: valid region too small");

  auto placeable = [&](double x, double y) {
    const int px = static_cast<int>(std::lround(grid.px_from_mm(x)));
    const int py = static_cast<int>(std::lround(grid.py_from_mm(y)));
    return valid.contains(px, py) && valid(px, py);
  };

  std::mt19937_64 rot_rng(detail::splitmix64(seed ^ 0x5A5A5A5Aull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double rot_u = unit(rot_rng);
  const double rot_v = unit(rot_rng);

  CalibrationDataset ds;
  ds.surface = surface;
  ds.camera = camera;
  ds.render_config = config;
  ds.options = options;
  ds.seed = seed;
  ds.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::uint64_t s_seed = sample_seed(seed, i);
    std::mt19937_64 rng(s_seed);
    double u = std::fmod(detail::radical_inverse(i + 1, 2) + rot_u, 1.0);
    double v = std::fmod(detail::radical_inverse(i + 1, 3) + rot_v, 1.0);
    double x = xmin + u * (xmax - xmin);
    double y = ymin + v * (ymax - ymin);
    for (int tries = 0; !placeable(x, y); ++tries) {
      if (tries > 10000) throw ContractViolation("generate_calibration_dataset: could not place a probe");
      x = xmin + unit(rng) * (xmax - xmin);
      y = ymin + unit(rng) * (ymax - ymin);
    }
    const double depth = options.indentation_min + unit(rng) * (options.indentation_max - options.indentation_min);
    const SphereProbe probe = place_probe(surface.shape, x, y, options.probe_radius, depth);
    ds.samples.push_back(render_sample(surface, camera, config, probe, options, detail::splitmix64(s_seed)));
    ds.split.push_back(split_for_index(i, options.test_fraction));
  }
  return ds;
}

/// The stored contact mask, restricted to the frame's valid pixels.
inline Mask extract_contact_mask(const CalibrationSample& sample) {
  return mask_and(sample.contact_mask, sample.frame.mask);
}

}  // namespace tactile
