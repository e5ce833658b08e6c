#pragma once

#include "gsseg/refine.hpp"
#include "gsseg/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gsseg {

/// K x K pixel counts, rows = ground truth, cols = prediction.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<std::int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k);

  std::int64_t& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * num_classes + pred]; }
  std::int64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * num_classes + pred]; }
  std::int64_t total() const;
  bool is_diagonal() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

/// Counts every pixel pair; labels must be < num_classes.
ConfusionMatrix confusion(const LabelMap& gt, const LabelMap& pred, int num_classes);

struct ClassScores {
  /// NaN marks classes left out of the mean.
  std::vector<double> iou;
  std::vector<double> acc;
  double miou = 0.0;
  double macc = 0.0;
  /// Number of classes averaged.
  int classes_used = 0;
};

/// Means of IoU and recall over classes present in the ground truth.
ClassScores class_scores(const ConfusionMatrix& cm, bool include_background = true);

struct MiouMacc {
  double miou = 0.0;
  double macc = 0.0;
};
MiouMacc miou_macc(const ConfusionMatrix& cm, bool include_background = true);

/// Fraction of Gaussians whose class equals the planted label.
double gaussian_accuracy(const Segmentation& seg, std::span<const int> planted);

enum class EvalProtocol { kPooled, kPerView };

struct EvalReport {
  EvalProtocol protocol = EvalProtocol::kPooled;
  bool include_background = true;
  ClassScores scores;
  /// Pooled over all views, whatever the protocol.
  ConfusionMatrix pooled;
  std::vector<MiouMacc> per_view;
};

/// Pooled: one matrix over all views. Per-view: metrics per view, then averaged.
EvalReport evaluate(std::span<const LabelMap> gt, std::span<const LabelMap> pred, int num_classes,
                    EvalProtocol protocol = EvalProtocol::kPooled, bool include_background = true);

std::string protocol_name(const EvalReport& report);
std::string eval_report_json(const EvalReport& report, std::span<const std::string> class_names);
std::string eval_report_table(const EvalReport& report, std::span<const std::string> class_names);

}  // namespace gsseg
