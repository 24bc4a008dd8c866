#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tactile/error.hpp"

namespace tactile {

enum class ChannelMode { RgbOnly, RgbNir };

inline int channel_count(ChannelMode mode) { return mode == ChannelMode::RgbOnly ? 3 : 6; }
inline const char* to_string(ChannelMode mode) { return mode == ChannelMode::RgbOnly ? "rgb" : "rgbnir"; }
inline ChannelMode channel_mode_from_string(const std::string& s) {
  if (s == "rgb") return ChannelMode::RgbOnly;
  if (s == "rgbnir") return ChannelMode::RgbNir;
  throw ConfigError("unknown channel mode '" + s + "' (expected rgb or rgbnir)");
}

/// Fourier features of normalised pixel coordinates:
/// [u, v, sin(2^k pi u), cos(2^k pi u), sin(2^k pi v), cos(2^k pi v)], k < n_frequencies.
struct PositionalEncodingConfig {
  int n_frequencies = 4;
  bool include_raw = true;

  std::size_t length() const { return (include_raw ? 2u : 0u) + 4u * static_cast<std::size_t>(n_frequencies); }
  friend bool operator==(const PositionalEncodingConfig&, const PositionalEncodingConfig&) = default;
};

inline void positional_encoding(double u, double v, const PositionalEncodingConfig& config, std::span<double> out) {
  if (!(u >= -1.0 && u <= 1.0 && v >= -1.0 && v <= 1.0))
    throw ContractViolation("positional_encoding: coordinates must lie in [-1, 1]");
  require(config.n_frequencies >= 0, "positional_encoding: n_frequencies must be >= 0");
  require(out.size() == config.length(), "positional_encoding: output span has the wrong length");
  constexpr double pi = 3.14159265358979323846;
  std::size_t i = 0;
  if (config.include_raw) {
    out[i++] = u;
    out[i++] = v;
  }
  double scale = pi;
  for (int k = 0; k < config.n_frequencies; ++k, scale *= 2.0) {
    out[i++] = std::sin(scale * u);
    out[i++] = std::cos(scale * u);
    out[i++] = std::sin(scale * v);
    out[i++] = std::cos(scale * v);
  }
}

inline std::vector<double> positional_encoding(double u, double v, const PositionalEncodingConfig& config) {
  require(config.n_frequencies >= 0, "positional_encoding: n_frequencies must be >= 0");
  std::vector<double> out(config.length());
  positional_encoding(u, v, config, out);
  return out;
}

/// Maps pixel column/row to [-1, 1].
inline double normalized_coordinate(int index, int extent) {
  return extent > 1 ? 2.0 * index / (extent - 1) - 1.0 : 0.0;
}

}  // namespace tactile
