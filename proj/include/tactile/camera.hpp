#pragma once

#include <cmath>

#include <Eigen/Core>

#include "tactile/error.hpp"

namespace tactile {

/// Scales an in-air focal length to the value seen through a refractive
/// medium: f_medium = f_air * n_medium / n_air.
inline double correct_focal_for_medium(double f_air, double n_medium, double n_air = 1.0) {
  if (!(f_air > 0.0) || !(n_medium > 0.0) || !(n_air > 0.0))
    throw DomainError("correct_focal_for_medium: inputs must be positive");
  return f_air * n_medium / n_air;
}

/// Pinhole camera with an optional refractive medium in front of the lens.
/// fx/fy are the in-air focal lengths; the projection uses the corrected ones.
struct CameraModel {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 319.5;
  double cy = 239.5;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // mm
  double n_air = 1.0;
  double n_medium = 1.5168;
  int width = 640;
  int height = 480;
  // When false the medium correction is skipped (n_medium is carried along only).
  bool apply_medium_correction = true;

  double effective_fx() const {
    return apply_medium_correction ? correct_focal_for_medium(fx, n_medium, n_air) : fx;
  }
  double effective_fy() const {
    return apply_medium_correction ? correct_focal_for_medium(fy, n_medium, n_air) : fy;
  }

  /// Throws ContractViolation when an invariant does not hold.
  void validate() const {
    require(fx > 0.0 && fy > 0.0, "camera: focal lengths must be positive");
    require(n_air >= 1.0 && n_medium >= 1.0, "camera: refractive indices must be >= 1");
    require(width > 0 && height > 0, "camera: resolution must be positive");
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    require((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9,
            "camera: rotation is not orthonormal");
  }
};

/// Rigidly transforms `point` into the camera frame and projects it.
inline Eigen::Vector2d project_point(const CameraModel& camera, const Eigen::Vector3d& point) {
  const Eigen::Vector3d p = camera.rotation * point + camera.translation;
  if (p.z() <= 1e-9) throw DomainError("project_point: point is behind the camera");
  return {camera.effective_fx() * p.x() / p.z() + camera.cx, camera.effective_fy() * p.y() / p.z() + camera.cy};
}

}  // namespace tactile
