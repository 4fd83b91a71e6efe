// transform.hpp - 7-parameter similarity transform between world spaces.
#pragma once

#include <Eigen/Core>
#include <string>

#include "voxshape/grid.hpp"

namespace voxshape {

// Maps a moving-space world point p to the fixed space:
//   q = scale * rotation * p + translation.
// fixed_grid is the lattice that warp() resamples onto.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Geometry fixed_grid;

  static SimilarityTransform identity(const Geometry& fixed_grid);

  // Rotation about `axis` by `angle_rad`.
  static Eigen::Matrix3d axis_angle(const Eigen::Vector3d& axis, double angle_rad);

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
  Eigen::Vector3d apply_inverse(const Eigen::Vector3d& q) const {
    return rotation.transpose() * (q - translation) / scale;
  }

  // Throws ArgumentError unless scale > 0 and rotation is proper orthonormal.
  void validate(double tol = 1e-9) const;
};

// Analytic inverse; the result resamples onto original_grid.
SimilarityTransform inverse(const SimilarityTransform& t, const Geometry& original_grid);

// Applies `first` then `second`; fixed_grid comes from `second`.
SimilarityTransform compose(const SimilarityTransform& second, const SimilarityTransform& first);

// Angle (radians) of the relative rotation a * b^T.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// JSON document {scale, rotation (row-major 9), translation, fixed_grid}.
std::string transform_to_json(const SimilarityTransform& t);
SimilarityTransform transform_from_json(const std::string& text);

}  // namespace voxshape
