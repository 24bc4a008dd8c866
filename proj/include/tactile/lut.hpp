#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tactile/dataset.hpp"
#include "tactile/encoding.hpp"

namespace tactile {

/// Quantised-intensity -> mean gradient table (the classic GelSight calibration).
struct LookupTable {
  struct Cell {
    double gx = 0.0;
    double gy = 0.0;
    std::uint64_t count = 0;
  };

  int bins_per_channel = 16;
  ChannelMode channel_mode = ChannelMode::RgbOnly;
  std::map<std::uint64_t, Cell> cells;  // key = sum_c bin_c * bins^c

  int channels() const { return channel_count(channel_mode); }
};

/// Bin of an intensity in [0, 1]; the top edge belongs to the last bin.
inline int lut_bin(double intensity, int bins) {
  const double scaled = std::floor(intensity * bins);
  if (!(scaled >= 0.0)) return 0;
  return scaled >= bins ? bins - 1 : static_cast<int>(scaled);
}

inline std::uint64_t lut_key(const LookupTable& table, std::span<const double> intensities) {
  if (static_cast<int>(intensities.size()) != table.channels())
    throw ContractViolation("lookup table: intensity vector does not match the channel mode");
  std::uint64_t key = 0;
  std::uint64_t stride = 1;
  for (double v : intensities) {
    key += stride * static_cast<std::uint64_t>(lut_bin(v, table.bins_per_channel));
    stride *= static_cast<std::uint64_t>(table.bins_per_channel);
  }
  return key;
}

inline std::vector<int> lut_decode(const LookupTable& table, std::uint64_t key) {
  std::vector<int> bins(static_cast<std::size_t>(table.channels()));
  for (auto& b : bins) {
    b = static_cast<int>(key % static_cast<std::uint64_t>(table.bins_per_channel));
    key /= static_cast<std::uint64_t>(table.bins_per_channel);
  }
  return bins;
}

/// Folds one observation into the running mean of its bin.
inline void lut_add(LookupTable& table, std::span<const double> intensities, double gx, double gy) {
  if (!std::isfinite(gx) || !std::isfinite(gy)) throw ContractViolation("lookup table: non-finite gradient");
  auto& cell = table.cells[lut_key(table, intensities)];
  ++cell.count;
  cell.gx += (gx - cell.gx) / static_cast<double>(cell.count);
  cell.gy += (gy - cell.gy) / static_cast<double>(cell.count);
}

inline LookupTable make_lookup_table(int bins_per_channel, ChannelMode mode) {
  require(bins_per_channel >= 1, "lookup table: bins_per_channel must be >= 1");
  const double span = std::pow(static_cast<double>(bins_per_channel), channel_count(mode));
  require(span < 1.8e19, "lookup table: bin space does not fit a 64-bit key");
  LookupTable t;
  t.bins_per_channel = bins_per_channel;
  t.channel_mode = mode;
  return t;
}

/// Builds the table from the contact pixels of the training split.
inline LookupTable lut_build(const CalibrationDataset& dataset, int bins_per_channel, ChannelMode mode,
                             double nz_floor = kDefaultNzFloor) {
  if (dataset.samples.empty()) throw ContractViolation("lut_build: dataset is empty");
  LookupTable table = make_lookup_table(bins_per_channel, mode);
  const int channels = channel_count(mode);
  std::vector<double> v(static_cast<std::size_t>(channels));
  for (auto s : dataset.indices(Split::Train)) {
    const auto& smp = dataset.samples[s];
    if (mode == ChannelMode::RgbNir && !smp.frame.has_nir) throw ModeMismatch("lut_build: dataset has no NIR channels");
    const Mask cm = extract_contact_mask(smp);
    for (std::size_t i = 0; i < cm.size(); ++i) {
      if (!cm[i]) continue;
      for (int c = 0; c < channels; ++c) v[static_cast<std::size_t>(c)] = smp.frame.channels[c][i];
      const double nz = std::max(smp.gt_normals.nz[i], nz_floor);
      lut_add(table, v, -smp.gt_normals.nx[i] / nz, -smp.gt_normals.ny[i] / nz);
    }
  }
  return table;
}

/// Exact bin when populated, otherwise the populated bin nearest in L1 bin
/// distance (lowest key wins ties).
inline Eigen::Vector2d lut_query(const LookupTable& table, std::span<const double> intensities) {
  if (table.cells.empty()) throw ContractViolation("lut_query: table is empty");
  const std::uint64_t key = lut_key(table, intensities);
  if (auto it = table.cells.find(key); it != table.cells.end()) return {it->second.gx, it->second.gy};
  const auto target = lut_decode(table, key);
  long best = std::numeric_limits<long>::max();
  const LookupTable::Cell* winner = nullptr;
  for (const auto& [k, cell] : table.cells) {
    const auto bins = lut_decode(table, k);
    long d = 0;
    for (std::size_t c = 0; c < bins.size(); ++c) d += std::labs(static_cast<long>(bins[c] - target[c]));
    if (d < best) {
      best = d;
      winner = &cell;
    }
  }
  return {winner->gx, winner->gy};
}

}  // namespace tactile
