#pragma once

#include "gsseg/projection.hpp"
#include "gsseg/types.hpp"

#include <span>
#include <vector>

namespace gsseg {

/// How object codes enter the blend: raw logits or per-Gaussian softmax probabilities.
enum class CodeMode { kRaw, kSoftmax };

struct RasterConfig {
  /// Upper clamp on per-splat alpha; keeps transmittance positive.
  double alpha_max = 0.99;
  /// Blending stops once running transmittance drops below this value.
  double min_transmittance = 1e-4;
  /// Alphas below this are treated as outside the splat's support.
  double alpha_min = 1e-10;
  int tile_size = 16;
};

/// K x (H*W) map, column n = blended vector of pixel n (row-major pixel order).
struct SemanticImage {
  int width = 0;
  int height = 0;
  CodeMode mode = CodeMode::kSoftmax;
  Eigen::MatrixXd data;

  int channels() const { return static_cast<int>(data.rows()); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct BlendEntry {
  int gaussian_index = 0;
  double weight = 0.0;
};

/// Front-to-back blend weights for every pixel, kept from forward to backward.
struct BlendRecord {
  int width = 0;
  int height = 0;
  int tile_size = 16;
  /// entries[offsets[n] .. offsets[n+1]) belong to pixel n.
  std::vector<std::size_t> offsets;
  std::vector<BlendEntry> entries;
  /// Residual transmittance per pixel after the last recorded splat.
  std::vector<double> transmittance;

  std::size_t pixel_count() const { return transmittance.size(); }
  std::span<const BlendEntry> pixel(std::size_t n) const {
    return {entries.data() + offsets[n], offsets[n + 1] - offsets[n]};
  }
};

struct SemanticRender {
  SemanticImage image;
  BlendRecord record;
};

/// opacity * exp(-0.5 d^T cov2d^-1 d), clamped to alpha_max.
double alpha_at(const Splat2D& splat, const Vec2& pixel, double alpha_max = 0.99);

/// Per-Gaussian blend inputs: the codes themselves or their softmax (K x n).
Eigen::MatrixXd code_values(const Scene& scene, CodeMode mode);

/// Tiled front-to-back blending of arbitrary per-Gaussian vectors (`values` is C x n).
/// The residual transmittance of each pixel is multiplied by `background` and added.
/// Fills `record` when non-null.
Eigen::MatrixXd blend(const SplatList& splats, const Eigen::MatrixXd& values,
                      const Eigen::VectorXd& background, const RasterConfig& config,
                      BlendRecord* record = nullptr);

/// Re-blends new per-Gaussian values through stored weights; equals `blend` on the same
/// geometry without revisiting splats.
Eigen::MatrixXd blend_from_record(const BlendRecord& record, const Eigen::MatrixXd& values,
                                  const Eigen::VectorXd& background);

/// Object-code rendering; uncovered transmittance resolves to the background class.
SemanticRender render_semantic(const Scene& scene, const SplatList& splats, CodeMode mode,
                               const RasterConfig& config = {});

/// 3 x (H*W) color image from the degree-0 SH term, black background.
Eigen::MatrixXd render_color(const Scene& scene, const SplatList& splats, const RasterConfig& config = {});

/// Adjoint of the blend: gradient of a loss w.r.t. every Gaussian's object code (K x n),
/// given dL/d(pixel) as K x (H*W). Accumulation order is fixed, so the result does not
/// depend on the thread count.
Eigen::MatrixXd backward_codes(const BlendRecord& record, const Eigen::MatrixXd& grad_pixels,
                               const Scene& scene, CodeMode mode);

/// Per-pixel argmax, ties to the lowest class.
LabelMap argmax_labels(const SemanticImage& image);

}  // namespace gsseg
