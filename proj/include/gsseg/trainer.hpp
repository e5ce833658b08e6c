#pragma once

#include "gsseg/projection.hpp"
#include "gsseg/rasterizer.hpp"
#include "gsseg/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gsseg {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  int iterations = 300;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Views per optimizer step; views are visited cyclically in list order.
  int batch = 1;
  CodeMode mode = CodeMode::kSoftmax;
  double log_eps = 1e-8;
  ProjectionConfig projection;
  RasterConfig raster;

  void validate(std::size_t num_views) const;
};

/// A posed ground-truth mask and its K x N one-hot matrix.
struct TrainView {
  Camera camera;
  LabelMap label_map;
  Eigen::MatrixXd one_hot;
};

Eigen::MatrixXd make_one_hot(const LabelMap& label_map, int num_classes);
TrainView make_train_view(const Camera& camera, const LabelMap& label_map, int num_classes);

struct CrossEntropy {
  double loss = 0.0;
  /// d loss / d rendered, K x N.
  Eigen::MatrixXd grad;
};

/// Per-view loss: (1/K) sum_i -(1/N) sum_n M_i^n log max(Mbar_i^n, log_eps).
/// The gradient is zero wherever the clamp is active.
CrossEntropy ce_loss(const Eigen::MatrixXd& one_hot, const Eigen::MatrixXd& rendered, double log_eps);

struct TrainReport {
  int iterations = 0;
  /// Full objective over all views before the first step.
  double initial_loss = 0.0;
  /// Mean loss of the views used at each step.
  std::vector<double> loss_curve;
  /// Full objective over all views after the last step.
  double final_loss = 0.0;
  std::vector<double> final_view_ces;
  double seconds = 0.0;
};

/// Pretty-printed JSON with the loss curve and timing.
std::string train_report_json(const TrainReport& report);

/// Called once per step with (iteration, step loss).
using ProgressSink = std::function<void(int, double)>;

/// Mean per-view cross-entropy over all views for the scene's current codes.
double objective(const Scene& scene, const std::vector<TrainView>& views, const TrainConfig& config,
                 std::vector<double>* per_view = nullptr);

/// Optimizes object codes in place; geometry is left untouched. Throws on NaN loss.
TrainReport train(Scene& scene, const std::vector<TrainView>& views, const TrainConfig& config,
                  const ProgressSink& progress = {});

}  // namespace gsseg
