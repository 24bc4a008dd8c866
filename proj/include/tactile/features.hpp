#pragma once

#include <span>

#include "tactile/encoding.hpp"
#include "tactile/render.hpp"

namespace tactile {

/// Writes the estimator input of pixel (x, y): the channel intensities
/// followed by the positional encoding of the pixel.
inline void pixel_features(const TactileFrame& frame, int x, int y, ChannelMode mode,
                           const PositionalEncodingConfig& encoding, std::span<double> out) {
  const int channels = channel_count(mode);
  for (int c = 0; c < channels; ++c) out[c] = frame.channels[c](x, y);
  positional_encoding(normalized_coordinate(x, frame.width()), normalized_coordinate(y, frame.height()), encoding,
                      out.subspan(static_cast<std::size_t>(channels)));
}

inline void check_frame_mode(const TactileFrame& frame, ChannelMode mode) {
  if (mode == ChannelMode::RgbNir && !frame.has_nir)
    throw ModeMismatch("estimator expects RGB-NIR input but the frame carries RGB only");
}

}  // namespace tactile
