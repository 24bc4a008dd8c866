#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <png.h>

#include "tactile/detail/viridis.hpp"
#include "tactile/error.hpp"
#include "tactile/normal_map.hpp"
#include "tactile/raster.hpp"

namespace tactile {

namespace detail {

// Writes 8- or 16-bit PNG rows. No timestamps or text chunks, so output
// bytes depend only on the pixels.
inline void write_png(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
                      const std::vector<std::uint8_t>& rows) {
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels) * (bit_depth / 8);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rows.data() + static_cast<std::size_t>(y) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) throw IoError("cannot close '" + path.string() + "'");
}

}  // namespace detail

/// Colour range used by a heatmap; invalid pixels are drawn black.
struct HeatmapRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Min/max over the mask (finite values only); a flat field gets a unit span.
inline HeatmapRange auto_range(const Grid<double>& values, const Mask& mask) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask[i] && std::isfinite(values[i])) {
      lo = std::min(lo, values[i]);
      hi = std::max(hi, values[i]);
    }
  if (!(lo <= hi)) return {};
  if (hi - lo < 1e-12) hi = lo + 1.0;
  return {lo, hi};
}

inline std::uint8_t viridis_index(double v, const HeatmapRange& r) {
  const double t = std::clamp((v - r.lo) / (r.hi - r.lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(t * 255.0));
}

inline void write_heatmap_png(const std::filesystem::path& path, const Grid<double>& values, const Mask& mask,
                              const HeatmapRange& range) {
  require(values.same_shape(mask), "heatmap: shape mismatch");
  std::vector<std::uint8_t> rows(values.size() * 3, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i] || !std::isfinite(values[i])) continue;
    const auto& c = detail::kViridis[viridis_index(values[i], range)];
    std::copy(c.begin(), c.end(), rows.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  detail::write_png(path, values.width(), values.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

inline void write_heatmap_png(const std::filesystem::path& path, const Grid<double>& values, const Mask& mask) {
  write_heatmap_png(path, values, mask, auto_range(values, mask));
}

/// Normals as colour: channel = round(255 * (n + 1) / 2).
inline void write_normals_png(const std::filesystem::path& path, const NormalMap& n) {
  std::vector<std::uint8_t> rows(n.mask.size() * 3, 0);
  auto enc = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 0.5, 0.0, 1.0) * 255.0)); };
  for (std::size_t i = 0; i < n.mask.size(); ++i) {
    if (!n.mask[i]) continue;
    rows[3 * i] = enc(n.nx[i]);
    rows[3 * i + 1] = enc(n.ny[i]);
    rows[3 * i + 2] = enc(n.nz[i]);
  }
  detail::write_png(path, n.width(), n.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

/// 16-bit grayscale export of an intensity channel in [0, 1].
inline void write_channel_png16(const std::filesystem::path& path, const Grid<double>& values, const Mask& mask) {
  require(values.same_shape(mask), "channel png: shape mismatch");
  std::vector<std::uint8_t> rows(values.size() * 2, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i]) continue;
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 65535.0));
    rows[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
    rows[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
  }
  detail::write_png(path, values.width(), values.height(), PNG_COLOR_TYPE_GRAY, 16, rows);
}

}  // namespace tactile
