#pragma once

#include <algorithm>
#include <unordered_map>
#include <vector>

#include "tactile/features.hpp"
#include "tactile/lut.hpp"
#include "tactile/psnn.hpp"

namespace tactile {

/// PSNN inference over every valid pixel (batched, inference mode).
inline NormalMap estimate_normal_map(const TactileFrame& frame, const PsnnModel& model) {
  check_frame_mode(frame, model.channel_mode);
  const int w = frame.width();
  const int h = frame.height();
  NormalMap out(w, h);
  out.mask = frame.mask;
  std::vector<std::size_t> pixels;
  for (std::size_t i = 0; i < frame.mask.size(); ++i)
    if (frame.mask[i]) pixels.push_back(i);

  const int width = model.input_width();
  std::vector<double> feat(static_cast<std::size_t>(width));
  constexpr std::size_t kChunk = 8192;
  for (std::size_t start = 0; start < pixels.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, pixels.size() - start);
    Eigen::MatrixXd x(width, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t p = pixels[start + j];
      pixel_features(frame, static_cast<int>(p % w), static_cast<int>(p / w), model.channel_mode, model.encoding, feat);
      for (int r = 0; r < width; ++r) x(r, static_cast<Eigen::Index>(j)) = feat[static_cast<std::size_t>(r)];
    }
    const Eigen::MatrixXd raw = psnn_infer_raw(model, x);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t p = pixels[start + j];
      Eigen::Vector3d nrm = normalize_or_up(raw.col(static_cast<Eigen::Index>(j)));
      // Back-facing predictions are folded onto the visible hemisphere.
      if (nrm.z() <= 0.0) nrm = normalize_or_up(Eigen::Vector3d(nrm.x(), nrm.y(), std::max(1e-3, -nrm.z())));
      out.nx[p] = nrm.x();
      out.ny[p] = nrm.y();
      out.nz[p] = nrm.z();
    }
  }
  return out;
}

/// Lookup-table estimation; gradients become n = normalize(-Gx, -Gy, 1).
inline NormalMap estimate_normal_map(const TactileFrame& frame, const LookupTable& table) {
  check_frame_mode(frame, table.channel_mode);
  if (table.cells.empty()) throw ContractViolation("estimate_normal_map: lookup table is empty");
  NormalMap out(frame.width(), frame.height());
  out.mask = frame.mask;
  const int channels = table.channels();
  std::vector<double> v(static_cast<std::size_t>(channels));
  std::unordered_map<std::uint64_t, Eigen::Vector2d> memo;
  for (std::size_t i = 0; i < frame.mask.size(); ++i) {
    if (!frame.mask[i]) continue;
    for (int c = 0; c < channels; ++c) v[static_cast<std::size_t>(c)] = frame.channels[c][i];
    const std::uint64_t key = lut_key(table, v);
    auto it = memo.find(key);
    if (it == memo.end()) it = memo.emplace(key, lut_query(table, v)).first;
    const Eigen::Vector3d n = Eigen::Vector3d(-it->second.x(), -it->second.y(), 1.0).normalized();
    out.nx[i] = n.x();
    out.ny[i] = n.y();
    out.nz[i] = n.z();
  }
  return out;
}

}  // namespace tactile
