#pragma once

#include "gsseg/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gsseg {

struct RefineConfig {
  /// Gaussians whose max class probability is below beta are re-estimated from neighbors.
  double beta = 0.65;
  /// Neighbors averaged for each ambiguous Gaussian.
  int k = 50;
  /// Neighbors used for the mean-distance statistic when filtering.
  int filter_k = 50;
  /// Removal threshold is mean + filter_std_mult * stddev of the mean distances.
  double filter_std_mult = 1.0;

  void validate() const;
};

/// Hard per-Gaussian labels and their softmax confidence.
struct Segmentation {
  std::vector<int> class_of;
  std::vector<double> confidence;

  std::size_t size() const { return class_of.size(); }
};

/// Indices (ascending) whose max(softmax(code)) < beta.
std::vector<int> select_ambiguous(const Scene& scene, double beta);

/// Replaces each ambiguous Gaussian's code with the mean code of its k nearest other
/// Gaussians. Selection and neighbor codes both come from the input snapshot.
Scene knn_refine(const Scene& scene, const RefineConfig& config);

/// argmax of each code (ties to the lowest class) with max softmax as confidence.
Segmentation segment(const Scene& scene);

struct FilterResult {
  std::vector<int> kept;
  std::vector<int> removed;
  /// Input segmentation with removed Gaussians reassigned to background.
  Segmentation segmentation;
  /// Set when the class has fewer than filter_k + 1 members; nothing is removed then.
  bool too_small = false;
  /// Mean neighbor distance of each member, aligned with `members`.
  std::vector<int> members;
  std::vector<double> mean_distance;
  double mu = 0.0;
  double sigma = 0.0;
};

/// Statistical outlier removal within one class: drop members whose mean distance to
/// their filter_k nearest same-class neighbors exceeds mu + filter_std_mult * sigma
/// (population standard deviation).
FilterResult statistical_filter(const Scene& scene, const Segmentation& seg, int class_id,
                                const RefineConfig& config);

/// Runs statistical_filter over every non-background class in turn.
Segmentation filter_all_classes(const Scene& scene, const Segmentation& seg, const RefineConfig& config,
                                std::vector<FilterResult>* details = nullptr);

/// Indices (ascending) of Gaussians whose class is in `class_ids`.
std::vector<int> select_classes(const Segmentation& seg, std::span<const int> class_ids);

/// Sub-scene of the Gaussians whose class is in `class_ids`, order preserved.
Scene extract_objects(const Scene& scene, const Segmentation& seg, std::span<const int> class_ids);

/// Hard-label scene for rendering a segmentation: one-hot codes of class_of, with
/// Gaussians the filter reassigned to background (argmax of their code is not
/// background) left out entirely.
Scene labeled_scene(const Scene& scene, const Segmentation& seg);

/// Palette color in [0, 1] for a class; background is dark gray.
Vec3 class_color(int class_id);

/// Copy of the scene with each Gaussian's base color replaced by its class color.
Scene colorize(const Scene& scene, const Segmentation& seg);

void save_segmentation(const Scene& scene, const Segmentation& seg, const std::filesystem::path& path);
Segmentation load_segmentation(const std::filesystem::path& path);

}  // namespace gsseg
