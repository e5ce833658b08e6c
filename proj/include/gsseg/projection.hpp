#pragma once

#include "gsseg/types.hpp"

#include <vector>

namespace gsseg {

/// Inclusive integer pixel rectangle.
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = -1;
  int y1 = -1;

  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

/// A Gaussian's screen-space footprint for one camera.
struct Splat2D {
  int gaussian_index = 0;
  Vec2 center_px = Vec2::Zero();
  /// Projected covariance in px^2, regularization included.
  Mat2 cov2d = Mat2::Identity();
  /// Inverse of cov2d.
  Mat2 conic = Mat2::Identity();
  double depth = 0.0;
  double opacity = 0.0;
  /// 3-sigma extent clipped to the image.
  PixelRect bbox;
};

/// Splats sorted by ascending depth, ties broken by ascending Gaussian index.
struct SplatList {
  std::vector<Splat2D> splats;
  Camera camera;
};

struct ProjectionConfig {
  double near = 0.01;
  /// Added to both diagonal entries of the projected covariance (px^2).
  double cov_regularization = 0.3;
  double cull_sigma = 3.0;
};

/// Sigma = R S S^T R^T.
Mat3 build_cov3d(const Vec3& scale, const Eigen::Quaterniond& rotation);

/// EWA projection of the Jacobian-linearized covariance, culling and global depth sort.
SplatList project(const Scene& scene, const Camera& camera, const ProjectionConfig& config = {});

/// Projected covariance before regularization: upper-left 2x2 of J W Sigma W^T J^T.
Mat2 project_covariance(const Mat3& cov3d, const Mat3& world_to_camera_rotation, const Vec3& cam_point,
                        double fx, double fy);

}  // namespace gsseg
