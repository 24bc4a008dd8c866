#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tactile/error.hpp"

namespace tactile {

/// Dense row-major H x W field. Pixel (x, y) is column x, row y.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int width, int height) {
    if (width < 0 || height < 0) throw ContractViolation("grid dimensions must be non-negative");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;

inline std::size_t count(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }));
}

inline Mask mask_and(const Mask& a, const Mask& b) {
  require(a.same_shape(b), "mask_and: shape mismatch");
  Mask out(a.width(), a.height(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

/// True when every set pixel of `inner` is also set in `outer`.
inline bool is_subset(const Mask& inner, const Mask& outer) {
  require(inner.same_shape(outer), "is_subset: shape mismatch");
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i] && !outer[i]) return false;
  return true;
}

/// Scalar field plus validity mask. Used for heights, depths and per-channel data.
struct RasterGrid {
  Grid<double> values;
  Mask mask;

  RasterGrid() = default;
  RasterGrid(int width, int height, double fill = 0.0, bool valid = true)
      : values(width, height, fill), mask(width, height, valid ? 1 : 0) {}
  RasterGrid(Grid<double> v, Mask m) : values(std::move(v)), mask(std::move(m)) {
    require(values.same_shape(mask), "RasterGrid: values and mask differ in shape");
  }

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }
  double& operator()(int x, int y) noexcept { return values(x, y); }
  double operator()(int x, int y) const noexcept { return values(x, y); }
  bool valid(int x, int y) const noexcept { return mask(x, y) != 0; }

  /// Every value under the mask is finite.
  bool finite_under_mask() const {
    for (std::size_t i = 0; i < values.size(); ++i)
      if (mask[i] && !std::isfinite(values[i])) return false;
    return true;
  }

  friend bool operator==(const RasterGrid&, const RasterGrid&) = default;
};

}  // namespace tactile
