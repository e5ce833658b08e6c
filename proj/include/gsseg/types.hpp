#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gsseg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Degree-0 spherical harmonics constant.
inline constexpr double kShC0 = 0.28209479177387814;

/// Class 0 is reserved for background in every scene.
inline constexpr int kBackgroundClass = 0;

/// One scene primitive with activated parameters.
struct Gaussian {
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Vec3 color_dc = Vec3::Zero();
  /// Higher-order SH coefficients carried through I/O untouched.
  std::vector<double> sh_rest;
  /// Unconstrained per-class logits; softmax is applied at use sites.
  Eigen::VectorXd object_code;
};

struct Scene {
  std::vector<Gaussian> gaussians;
  int num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  /// Empty scene with `k` classes and default names ("background", "class_1", ...).
  static Scene with_classes(int k);

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  /// K x n matrix of object codes, column i = Gaussian i.
  Eigen::MatrixXd code_matrix() const;
  void set_code_matrix(const Eigen::MatrixXd& codes);
};

std::vector<std::string> default_class_names(int k);

/// Pinhole camera with a world-to-camera rigid transform (x right, y down, z forward).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;
  Mat4 world_to_camera = Mat4::Identity();

  Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  Vec3 to_camera(const Vec3& world) const { return rotation() * world + translation(); }
  /// Pixel coordinates of a camera-space point; pixel (x, y) is sampled at exactly (x, y).
  Vec2 project_camera_point(const Vec3& cam) const {
    return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  void validate() const;
};

/// H x W grid of class IDs, row-major.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h, std::uint16_t fill = 0)
      : width(w), height(h), labels(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t pixel_count() const { return labels.size(); }
  std::uint16_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

/// Numerically stable softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace gsseg
