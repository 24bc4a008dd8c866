#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tactile/error.hpp"

namespace tactile {

enum class TransformModel { Affine, Homography };

/// Matched corner positions between two camera views (pixels).
struct CorrespondenceSet {
  std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> pairs;
  TransformModel model = TransformModel::Homography;
};

inline std::size_t minimal_sample_size(TransformModel model) { return model == TransformModel::Affine ? 3 : 4; }

struct RansacResult {
  Eigen::Matrix3d transform = Eigen::Matrix3d::Identity();
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

/// Applies a 3x3 planar transform. Returns NaN when the point maps to infinity.
inline Eigen::Vector2d apply_transform(const Eigen::Matrix3d& t, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = t * p.homogeneous();
  if (std::abs(q.z()) < 1e-12) return {std::nan(""), std::nan("")};
  return q.hnormalized();
}

namespace detail {

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

inline bool collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  const Eigen::Vector2d ab = b - a;
  const Eigen::Vector2d ac = c - a;
  const double scale = std::max(ab.squaredNorm(), ac.squaredNorm());
  return std::abs(cross2(ab, ac)) <= 1e-9 * std::max(scale, 1e-300);
}

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
inline Eigen::Matrix3d normalizing_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 0.0 ? std::sqrt(2.0) / dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

}  // namespace detail

/// Least-squares affine fit (>= 3 pairs), embedded in a 3x3 matrix.
inline Eigen::Matrix3d fit_affine(const std::vector<Eigen::Vector2d>& src, const std::vector<Eigen::Vector2d>& dst) {
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::MatrixXd b(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.row(i) << src[i].x(), src[i].y(), 1.0;
    b.row(i) << dst[i].x(), dst[i].y();
  }
  const Eigen::MatrixXd x = a.colPivHouseholderQr().solve(b);  // 3x2
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t.block<2, 3>(0, 0) = x.transpose();
  return t;
}

/// Normalised DLT homography (>= 4 pairs), scaled so h33 = 1.
inline Eigen::Matrix3d fit_homography(const std::vector<Eigen::Vector2d>& src, const std::vector<Eigen::Vector2d>& dst) {
  const Eigen::Matrix3d ts = detail::normalizing_transform(src);
  const Eigen::Matrix3d td = detail::normalizing_transform(dst);
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * src[i].homogeneous();
    const Eigen::Vector3d q = td * dst[i].homogeneous();
    a.row(2 * i) << 0, 0, 0, -q.z() * p.x(), -q.z() * p.y(), -q.z() * p.z(), q.y() * p.x(), q.y() * p.y(), q.y() * p.z();
    a.row(2 * i + 1) << q.z() * p.x(), q.z() * p.y(), q.z() * p.z(), 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x() * p.z();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d out = td.inverse() * hn * ts;
  if (std::abs(out(2, 2)) < 1e-15) throw NoConsensus("fit_homography: h33 vanishes");
  return out / out(2, 2);
}

inline Eigen::Matrix3d fit_transform(TransformModel model, const std::vector<Eigen::Vector2d>& src,
                                     const std::vector<Eigen::Vector2d>& dst) {
  return model == TransformModel::Affine ? fit_affine(src, dst) : fit_homography(src, dst);
}

/// Robust view-to-view alignment. Draws minimal samples with a seeded
/// generator, keeps the model with the most inliers (first one wins ties),
/// then refits on all of its inliers by least squares.
inline RansacResult ransac_align(const CorrespondenceSet& set, double inlier_threshold, int max_iterations = 2000,
                                 std::uint64_t seed = 0) {
  const std::size_t k = minimal_sample_size(set.model);
  const std::size_t n = set.pairs.size();
  if (n < k) throw ContractViolation("ransac_align: not enough correspondences for the model");
  if (!(inlier_threshold > 0.0)) throw ContractViolation("ransac_align: inlier_threshold must be positive");

  auto degenerate = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b)
        for (std::size_t c = b + 1; c < idx.size(); ++c)
          if (detail::collinear(set.pairs[idx[a]].first, set.pairs[idx[b]].first, set.pairs[idx[c]].first) ||
              detail::collinear(set.pairs[idx[a]].second, set.pairs[idx[b]].second, set.pairs[idx[c]].second))
            return true;
    return false;
  };

  auto score = [&](const Eigen::Matrix3d& t, std::vector<bool>& mask) {
    std::size_t hits = 0;
    mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d p = apply_transform(t, set.pairs[i].first);
      const double err = (p - set.pairs[i].second).norm();
      if (err < inlier_threshold) {
        mask[i] = true;
        ++hits;
      }
    }
    return hits;
  };

  auto gather = [&](const std::vector<bool>& mask, std::vector<Eigen::Vector2d>& src, std::vector<Eigen::Vector2d>& dst) {
    src.clear();
    dst.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) {
        src.push_back(set.pairs[i].first);
        dst.push_back(set.pairs[i].second);
      }
  };

  std::mt19937_64 rng(seed);
  RansacResult best;
  std::vector<std::size_t> idx(k);
  std::vector<Eigen::Vector2d> src(k), dst(k);
  std::vector<bool> mask;
  for (int it = 0; it < max_iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      bool fresh = false;
      while (!fresh) {
        idx[j] = static_cast<std::size_t>(rng() % n);
        fresh = true;
        for (std::size_t m = 0; m < j; ++m) fresh = fresh && idx[m] != idx[j];
      }
    }
    if (degenerate(idx)) continue;
    for (std::size_t j = 0; j < k; ++j) {
      src[j] = set.pairs[idx[j]].first;
      dst[j] = set.pairs[idx[j]].second;
    }
    Eigen::Matrix3d model;
    try {
      model = fit_transform(set.model, src, dst);
    } catch (const NoConsensus&) {
      continue;
    }
    if (!model.allFinite()) continue;
    const std::size_t hits = score(model, mask);
    if (hits > best.inlier_count) {
      best.inlier_count = hits;
      best.transform = model;
      best.inliers = mask;
    }
  }
  if (best.inlier_count < k) throw NoConsensus("ransac_align: no model reached a minimal inlier set");

  // Refit on the consensus set; keep the refit only if it does not lose support.
  std::vector<Eigen::Vector2d> in_src, in_dst;
  gather(best.inliers, in_src, in_dst);
  const Eigen::Matrix3d refit = fit_transform(set.model, in_src, in_dst);
  if (refit.allFinite()) {
    const std::size_t hits = score(refit, mask);
    if (hits >= best.inlier_count) {
      best.transform = refit;
      best.inliers = mask;
      best.inlier_count = hits;
    }
  }
  return best;
}

}  // namespace tactile
