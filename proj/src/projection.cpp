#include "gsseg/projection.hpp"

#include <algorithm>
#include <cmath>

namespace gsseg {

Mat3 build_cov3d(const Vec3& scale, const Eigen::Quaterniond& rotation) {
  const Mat3 r = rotation.normalized().toRotationMatrix();
  const Mat3 m = r * scale.asDiagonal();
  Mat3 cov = m * m.transpose();
  // Symmetrize so downstream code sees exact symmetry.
  return 0.5 * (cov + cov.transpose());
}

Mat2 project_covariance(const Mat3& cov3d, const Mat3& world_to_camera_rotation, const Vec3& cam_point,
                        double fx, double fy) {
  const double z = cam_point.z();
  const double inv_z = 1.0 / z;
  Eigen::Matrix<double, 2, 3> j;
  j << fx * inv_z, 0.0, -fx * cam_point.x() * inv_z * inv_z,  //
      0.0, fy * inv_z, -fy * cam_point.y() * inv_z * inv_z;
  const Eigen::Matrix<double, 2, 3> t = j * world_to_camera_rotation;
  Mat2 cov = t * cov3d * t.transpose();
  cov(1, 0) = cov(0, 1);
  return cov;
}

SplatList project(const Scene& scene, const Camera& camera, const ProjectionConfig& config) {
  SplatList out;
  out.camera = camera;
  const Mat3 rot = camera.rotation();
  const Vec3 trans = camera.translation();

  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    const Gaussian& g = scene.gaussians[i];
    const Vec3 p = rot * g.mean + trans;
    if (!(p.z() > config.near)) continue;

    Splat2D s;
    s.gaussian_index = static_cast<int>(i);
    s.depth = p.z();
    s.opacity = g.opacity;
    s.center_px = camera.project_camera_point(p);
    s.cov2d = project_covariance(build_cov3d(g.scale, g.rotation), rot, p, camera.fx, camera.fy);
    s.cov2d(0, 0) += config.cov_regularization;
    s.cov2d(1, 1) += config.cov_regularization;

    const double det = s.cov2d.determinant();
    if (!(det > 0.0) || !s.center_px.allFinite()) continue;
    s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;

    // Largest eigenvalue of the symmetric 2x2 in closed form.
    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    const double radius = config.cull_sigma * std::sqrt(lambda_max);
    const double fx0 = std::floor(s.center_px.x() - radius);
    const double fx1 = std::ceil(s.center_px.x() + radius);
    const double fy0 = std::floor(s.center_px.y() - radius);
    const double fy1 = std::ceil(s.center_px.y() + radius);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > camera.width - 1 || fy0 > camera.height - 1) continue;
    s.bbox.x0 = static_cast<int>(std::max(fx0, 0.0));
    s.bbox.y0 = static_cast<int>(std::max(fy0, 0.0));
    s.bbox.x1 = static_cast<int>(std::min(fx1, camera.width - 1.0));
    s.bbox.y1 = static_cast<int>(std::min(fy1, camera.height - 1.0));
    out.splats.push_back(s);
  }

  std::sort(out.splats.begin(), out.splats.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.gaussian_index < b.gaussian_index;
  });
  return out;
}

}  // namespace gsseg
