#include "gsseg/types.hpp"

#include <cmath>
#include <stdexcept>

namespace gsseg {

std::vector<std::string> default_class_names(int k) {
  std::vector<std::string> names;
  names.reserve(k > 0 ? k : 0);
  for (int i = 0; i < k; ++i) {
    names.push_back(i == 0 ? "background" : "class_" + std::to_string(i));
  }
  return names;
}

Scene Scene::with_classes(int k) {
  Scene scene;
  scene.num_classes = k;
  scene.class_names = default_class_names(k);
  return scene;
}

void Scene::validate() const {
  if (num_classes < 2) {
    throw std::invalid_argument("scene needs at least 2 classes (background + one object), got " +
                                std::to_string(num_classes));
  }
  if (class_names.size() != static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("class name table has " + std::to_string(class_names.size()) +
                                " entries, expected " + std::to_string(num_classes));
  }
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    const std::string where = "gaussian " + std::to_string(i) + ": ";
    if (!(g.scale.array() > 0.0).all() || !g.scale.allFinite()) {
      throw std::invalid_argument(where + "scale must be strictly positive");
    }
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) {
      throw std::invalid_argument(where + "rotation quaternion is not unit length");
    }
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
      throw std::invalid_argument(where + "opacity outside [0, 1]");
    }
    if (g.object_code.size() != num_classes) {
      throw std::invalid_argument(where + "object code has length " +
                                  std::to_string(g.object_code.size()) + ", expected " +
                                  std::to_string(num_classes));
    }
    if (!g.mean.allFinite() || !g.object_code.allFinite()) {
      throw std::invalid_argument(where + "non-finite mean or object code");
    }
  }
}

Eigen::MatrixXd Scene::code_matrix() const {
  Eigen::MatrixXd codes(num_classes, static_cast<Eigen::Index>(gaussians.size()));
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    codes.col(static_cast<Eigen::Index>(i)) = gaussians[i].object_code;
  }
  return codes;
}

void Scene::set_code_matrix(const Eigen::MatrixXd& codes) {
  if (codes.rows() != num_classes || codes.cols() != static_cast<Eigen::Index>(gaussians.size())) {
    throw std::invalid_argument("code matrix shape does not match scene");
  }
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    gaussians[i].object_code = codes.col(static_cast<Eigen::Index>(i));
  }
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("camera image size must be positive");
  }
  if (!(fx > 0.0 && fy > 0.0)) {
    throw std::invalid_argument("camera focal lengths must be positive");
  }
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height)) {
    throw std::invalid_argument("camera principal point must lie inside the image");
  }
  if (!world_to_camera.allFinite()) {
    throw std::invalid_argument("camera pose is not finite");
  }
  const Mat3 r = rotation();
  const double orth_err = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth_err > 1e-5 || std::abs(r.determinant() - 1.0) > 1e-5) {
    throw std::invalid_argument("camera rotation is not orthonormal with det +1");
  }
  const Eigen::RowVector4d last_row = world_to_camera.row(3);
  if ((last_row - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("camera pose last row must be (0, 0, 0, 1)");
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) return logits;
  const double max_logit = logits.maxCoeff();
  Eigen::VectorXd out = (logits.array() - max_logit).exp().matrix();
  out /= out.sum();
  return out;
}

}  // namespace gsseg
