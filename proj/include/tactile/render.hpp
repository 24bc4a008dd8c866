#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tactile/camera.hpp"
#include "tactile/normal_map.hpp"
#include "tactile/surface.hpp"

namespace tactile {

inline constexpr int kFrameChannels = 6;  // R, G, B, NIR1, NIR2, NIR3
inline constexpr int kLightChannels = 4;  // R, G, B, NIR

enum class LightChannel { R = 0, G = 1, B = 2, NIR = 3 };
enum class Falloff { None, InverseSquare };

inline const char* to_string(LightChannel c) {
  constexpr const char* names[] = {"R", "G", "B", "NIR"};
  return names[static_cast<int>(c)];
}
inline LightChannel light_channel_from_string(const std::string& s) {
  if (s == "R") return LightChannel::R;
  if (s == "G") return LightChannel::G;
  if (s == "B") return LightChannel::B;
  if (s == "NIR") return LightChannel::NIR;
  throw ConfigError("unknown light channel '" + s + "'");
}
inline const char* to_string(Falloff f) { return f == Falloff::None ? "none" : "inverse_square"; }
inline Falloff falloff_from_string(const std::string& s) {
  if (s == "none") return Falloff::None;
  if (s == "inverse_square") return Falloff::InverseSquare;
  throw ConfigError("unknown falloff '" + s + "'");
}

struct Illuminant {
  Eigen::Vector3d position = Eigen::Vector3d(0, 0, 20);  // mm, grid frame
  LightChannel channel = LightChannel::R;
  double radiant_intensity = 1.0;
  Falloff falloff = Falloff::InverseSquare;
};

// Unit for inverse-square attenuation: distances are measured in 10 mm steps.
inline constexpr double kFalloffUnitMm = 10.0;

/// Lambertian multi-LED lighting model.
struct RenderConfig {
  std::vector<Illuminant> illuminants = default_illuminants();
  double albedo = 1.0;
  std::array<double, kFrameChannels> ambient{0.05, 0.05, 0.05, 0.05, 0.05, 0.05};
  std::array<double, kFrameChannels> noise_sigma{0, 0, 0, 0, 0, 0};
  Eigen::Vector3d nir_gains = Eigen::Vector3d(1.0, 0.97, 0.94);
  // response(c, l): how strongly frame channel c sees LEDs of light channel l.
  Eigen::Matrix<double, kFrameChannels, kLightChannels> channel_response = default_response();
  std::uint64_t rng_seed = 0;

  /// Four LEDs at distinct azimuths; the NIR LED sits lower and more oblique.
  static std::vector<Illuminant> default_illuminants() {
    auto at = [](double azimuth_deg, double radial, double height) {
      const double a = azimuth_deg * 3.14159265358979323846 / 180.0;
      return Eigen::Vector3d(radial * std::cos(a), radial * std::sin(a), height);
    };
    return {
        {at(0.0, 15.0, 20.0), LightChannel::R, 4.0, Falloff::InverseSquare},
        {at(120.0, 15.0, 20.0), LightChannel::G, 4.0, Falloff::InverseSquare},
        {at(240.0, 15.0, 20.0), LightChannel::B, 4.0, Falloff::InverseSquare},
        {at(60.0, 18.0, 10.0), LightChannel::NIR, 4.4, Falloff::InverseSquare},
    };
  }

  static Eigen::Matrix<double, kFrameChannels, kLightChannels> default_response() {
    Eigen::Matrix<double, kFrameChannels, kLightChannels> m = Eigen::Matrix<double, kFrameChannels, kLightChannels>::Zero();
    m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
    m(3, 3) = m(4, 3) = m(5, 3) = 1.0;
    return m;
  }

  double channel_gain(int channel) const { return channel < 3 ? 1.0 : nir_gains[channel - 3]; }

  void validate() const {
    require(albedo > 0.0 && albedo <= 1.0, "render: albedo must lie in (0, 1]");
    for (const auto& l : illuminants) require(l.radiant_intensity >= 0.0, "render: negative radiant intensity");
    for (int c = 0; c < kFrameChannels; ++c) {
      require(ambient[c] >= 0.0, "render: negative ambient term");
      require(noise_sigma[c] >= 0.0, "render: negative noise sigma");
    }
    require((nir_gains.array() >= 0.0).all(), "render: negative NIR gain");
    require((channel_response.array() >= 0.0).all(), "render: negative channel response");
    bool rgb = false, nir = false;
    for (const auto& l : illuminants) (l.channel == LightChannel::NIR ? nir : rgb) = true;
    require(rgb && nir, "render: need at least one RGB and one NIR illuminant");
  }
};

/// Six-channel RGB-NIR frame, intensities in [0, 1].
struct TactileFrame {
  std::array<Grid<double>, kFrameChannels> channels;
  Mask mask;
  bool has_nir = true;  // false for RGB-only captures; NIR rasters are then unused

  TactileFrame() = default;
  TactileFrame(int width, int height) : mask(width, height, 0) {
    for (auto& c : channels) c = Grid<double>(width, height, 0.0);
  }
  int width() const noexcept { return mask.width(); }
  int height() const noexcept { return mask.height(); }

  friend bool operator==(const TactileFrame&, const TactileFrame&) = default;
};

/// Intensity of one frame channel before noise and clamping.
inline double shade_pixel_unclamped(const Eigen::Vector3d& normal, const Eigen::Vector3d& point,
                                    const RenderConfig& config, int channel) {
  require(channel >= 0 && channel < kFrameChannels, "shade_pixel: channel index out of range");
  if (!(std::abs(normal.norm() - 1.0) <= 1e-6)) throw ContractViolation("shade_pixel: normal is not unit length");
  double sum = 0.0;
  for (const auto& light : config.illuminants) {
    const double response = config.channel_response(channel, static_cast<int>(light.channel));
    if (response == 0.0) continue;
    const Eigen::Vector3d to_light = light.position - point;
    const double r = to_light.norm();
    if (r <= 0.0) continue;
    const double cosine = std::max(0.0, normal.dot(to_light / r));
    double att = 1.0;
    if (light.falloff == Falloff::InverseSquare) {
      const double ru = r / kFalloffUnitMm;
      att = 1.0 / (ru * ru);
    }
    sum += response * light.radiant_intensity * cosine * att;
  }
  return config.ambient[channel] + config.albedo * config.channel_gain(channel) * sum;
}

inline double shade_pixel(const Eigen::Vector3d& normal, const Eigen::Vector3d& point, const RenderConfig& config,
                          int channel) {
  return std::clamp(shade_pixel_unclamped(normal, point, config, channel), 0.0, 1.0);
}

/// Shades every valid pixel of a height/normal raster pair, adds seeded
/// Gaussian noise and clamps. Output is a pure function of the inputs.
inline TactileFrame render_frame(const RasterGrid& heights, const NormalMap& normals, const CameraModel& camera,
                                 const RenderConfig& config, const GridGeometry& grid) {
  const int w = heights.width();
  const int h = heights.height();
  require(normals.width() == w && normals.height() == h, "render_frame: normals and heights differ in shape");
  require(camera.width == w && camera.height == h, "render_frame: rasters do not match the camera resolution");
  require(grid.width == w && grid.height == h, "render_frame: grid geometry does not match the rasters");
  config.validate();

  TactileFrame frame(w, h);
  frame.mask = mask_and(heights.mask, normals.mask);
  std::mt19937_64 rng(config.rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!frame.mask(x, y)) continue;
      const Eigen::Vector3d point(grid.x_mm(x), grid.y_mm(y), heights(x, y));
      const Eigen::Vector3d n = normals.at(x, y);
      for (int c = 0; c < kFrameChannels; ++c) {
        double v = shade_pixel_unclamped(n, point, config, c);
        if (config.noise_sigma[c] > 0.0) v += config.noise_sigma[c] * gauss(rng);
        frame.channels[c](x, y) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return frame;
}

}  // namespace tactile
