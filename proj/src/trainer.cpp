#include "gsseg/trainer.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gsseg {
namespace {

/// Cached per-view geometry: weights do not depend on codes, so one forward pass per
/// view serves every iteration.
struct ViewCache {
  BlendRecord record;
};

Eigen::VectorXd background_vector(int k) {
  Eigen::VectorXd bg = Eigen::VectorXd::Zero(k);
  bg[kBackgroundClass] = 1.0;
  return bg;
}

std::vector<ViewCache> build_caches(const Scene& scene, const std::vector<TrainView>& views,
                                    const TrainConfig& config) {
  std::vector<ViewCache> caches(views.size());
  // Values only matter for the rendered output; the record depends on geometry alone.
  const Eigen::MatrixXd dummy = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(scene.size()));
  for (std::size_t v = 0; v < views.size(); ++v) {
    const SplatList splats = project(scene, views[v].camera, config.projection);
    blend(splats, dummy, Eigen::VectorXd::Zero(1), config.raster, &caches[v].record);
  }
  return caches;
}

void check_views(const Scene& scene, const std::vector<TrainView>& views) {
  for (std::size_t v = 0; v < views.size(); ++v) {
    const TrainView& view = views[v];
    if (view.label_map.width != view.camera.width || view.label_map.height != view.camera.height) {
      throw std::invalid_argument("view " + std::to_string(v) + ": label map size does not match camera");
    }
    if (view.one_hot.rows() != scene.num_classes ||
        view.one_hot.cols() != static_cast<Eigen::Index>(view.camera.pixel_count())) {
      throw std::invalid_argument("view " + std::to_string(v) + ": one-hot matrix has wrong shape");
    }
  }
}

double objective_cached(const Scene& scene, const std::vector<TrainView>& views,
                        const std::vector<ViewCache>& caches, const TrainConfig& config,
                        std::vector<double>* per_view) {
  const Eigen::MatrixXd values = code_values(scene, config.mode);
  const Eigen::VectorXd bg = background_vector(scene.num_classes);
  double total = 0.0;
  if (per_view != nullptr) per_view->clear();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Eigen::MatrixXd rendered = blend_from_record(caches[v].record, values, bg);
    const double ces = ce_loss(views[v].one_hot, rendered, config.log_eps).loss;
    if (per_view != nullptr) per_view->push_back(ces);
    total += ces;
  }
  return total / static_cast<double>(views.size());
}

}  // namespace

void TrainConfig::validate(std::size_t num_views) const {
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0) || !(log_eps > 0.0)) throw std::invalid_argument("epsilons must be positive");
  if (batch < 1 || static_cast<std::size_t>(batch) > num_views) {
    throw std::invalid_argument("batch must lie in [1, number of views]");
  }
}

Eigen::MatrixXd make_one_hot(const LabelMap& label_map, int num_classes) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(num_classes, static_cast<Eigen::Index>(label_map.pixel_count()));
  for (std::size_t n = 0; n < label_map.pixel_count(); ++n) {
    const int label = label_map.labels[n];
    if (label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(label) + " out of range for K = " +
                                  std::to_string(num_classes));
    }
    m(label, static_cast<Eigen::Index>(n)) = 1.0;
  }
  return m;
}

TrainView make_train_view(const Camera& camera, const LabelMap& label_map, int num_classes) {
  if (label_map.width != camera.width || label_map.height != camera.height) {
    throw std::invalid_argument("label map size does not match camera");
  }
  return {camera, label_map, make_one_hot(label_map, num_classes)};
}

CrossEntropy ce_loss(const Eigen::MatrixXd& one_hot, const Eigen::MatrixXd& rendered, double log_eps) {
  if (one_hot.rows() != rendered.rows() || one_hot.cols() != rendered.cols()) {
    throw std::invalid_argument("one-hot and rendered maps differ in shape");
  }
  const Eigen::Index k = one_hot.rows();
  const Eigen::Index n = one_hot.cols();
  CrossEntropy out;
  out.grad = Eigen::MatrixXd::Zero(k, n);
  if (k == 0 || n == 0) return out;
  const double scale = 1.0 / (static_cast<double>(k) * static_cast<double>(n));

  double sum = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const double m = one_hot(i, p);
      if (m == 0.0) continue;
      const double r = rendered(i, p);
      const double clamped = std::max(r, log_eps);
      sum += m * std::log(clamped);
      if (r >= log_eps) out.grad(i, p) = -m * scale / clamped;
    }
  }
  out.loss = -sum * scale;
  return out;
}

double objective(const Scene& scene, const std::vector<TrainView>& views, const TrainConfig& config,
                 std::vector<double>* per_view) {
  if (views.empty()) throw std::invalid_argument("objective needs at least one view");
  check_views(scene, views);
  return objective_cached(scene, views, build_caches(scene, views, config), config, per_view);
}

TrainReport train(Scene& scene, const std::vector<TrainView>& views, const TrainConfig& config,
                  const ProgressSink& progress) {
  const auto start = std::chrono::steady_clock::now();
  if (views.empty()) throw std::invalid_argument("training needs at least one view");
  config.validate(views.size());
  scene.validate();
  check_views(scene, views);

  const std::vector<ViewCache> caches = build_caches(scene, views, config);
  const Eigen::VectorXd bg = background_vector(scene.num_classes);

  TrainReport report;
  report.iterations = config.iterations;
  report.initial_loss = objective_cached(scene, views, caches, config, nullptr);
  if (!std::isfinite(report.initial_loss)) throw std::runtime_error("initial loss is not finite");

  Eigen::MatrixXd codes = scene.code_matrix();
  Eigen::MatrixXd adam_m = Eigen::MatrixXd::Zero(codes.rows(), codes.cols());
  Eigen::MatrixXd adam_v = Eigen::MatrixXd::Zero(codes.rows(), codes.cols());
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;
  std::size_t next_view = 0;

  for (int it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(codes.rows(), codes.cols());
    double step_loss = 0.0;
    const Eigen::MatrixXd values = code_values(scene, config.mode);
    for (int b = 0; b < config.batch; ++b) {
      const std::size_t v = next_view;
      next_view = (next_view + 1) % views.size();
      const Eigen::MatrixXd rendered = blend_from_record(caches[v].record, values, bg);
      const CrossEntropy ce = ce_loss(views[v].one_hot, rendered, config.log_eps);
      step_loss += ce.loss;
      grad += backward_codes(caches[v].record, ce.grad, scene, config.mode);
    }
    step_loss /= config.batch;
    grad /= config.batch;
    if (!std::isfinite(step_loss) || !grad.allFinite()) {
      throw std::runtime_error("loss became NaN/Inf at iteration " + std::to_string(it));
    }
    report.loss_curve.push_back(step_loss);
    if (progress) progress(it, step_loss);

    if (config.optimizer == OptimizerKind::kSgd) {
      codes -= config.learning_rate * grad;
    } else {
      beta1_pow *= config.adam_beta1;
      beta2_pow *= config.adam_beta2;
      adam_m = config.adam_beta1 * adam_m + (1.0 - config.adam_beta1) * grad;
      adam_v = config.adam_beta2 * adam_v + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
      const Eigen::ArrayXXd m_hat = adam_m.array() / (1.0 - beta1_pow);
      const Eigen::ArrayXXd v_hat = adam_v.array() / (1.0 - beta2_pow);
      codes.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    if (!codes.allFinite()) throw std::runtime_error("object codes became NaN/Inf at iteration " + std::to_string(it));
    scene.set_code_matrix(codes);
  }

  report.final_loss = objective_cached(scene, views, caches, config, &report.final_view_ces);
  if (!std::isfinite(report.final_loss)) throw std::runtime_error("final loss is not finite");
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string train_report_json(const TrainReport& report) {
  nlohmann::json doc = {{"iterations", report.iterations},
                        {"initial_loss", report.initial_loss},
                        {"final_loss", report.final_loss},
                        {"final_view_ces", report.final_view_ces},
                        {"loss_curve", report.loss_curve},
                        {"seconds", report.seconds}};
  return doc.dump(2);
}

}  // namespace gsseg
