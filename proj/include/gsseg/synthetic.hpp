#pragma once

#include "gsseg/projection.hpp"
#include "gsseg/rasterizer.hpp"
#include "gsseg/scene_io.hpp"
#include "gsseg/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gsseg {

/// Counter-based generator: draw n of stream s under a seed is a pure function of
/// (seed, s, n), so fixtures are reproducible regardless of generation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  Vec3 unit_vector();
  Eigen::Quaterniond rotation();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

struct BlobSpec {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  int count = 100;
  int class_id = 1;
  Vec3 color = Vec3(0.8, 0.2, 0.2);
};

struct CameraRing {
  int count = 8;
  double radius = 4.0;
  /// Camera height above look_at along world +z.
  double height = 1.5;
  Vec3 look_at = Vec3::Zero();
  double fov_deg = 45.0;
  /// Rotates the whole ring; novel poses use a fractional step.
  double angle_offset_deg = 0.0;
};

struct SynthSpec {
  std::vector<BlobSpec> blobs;
  CameraRing ring;
  int width = 128;
  int height = 128;
  std::uint64_t seed = 0;
  /// 0 means max(class_id) + 1.
  int num_classes = 0;
  double opacity = 0.9;

  int resolved_num_classes() const;
  void validate() const;

  static SynthSpec from_json(const std::string& text);
  std::string to_json() const;

  /// Two blobs of 500 Gaussians, centers four radii apart, eight ring cameras at 128x128.
  static SynthSpec two_blob_demo(std::uint64_t seed = 7);
  /// Three well-separated blobs labeled 1, 2 and 3.
  static SynthSpec three_blob_demo(std::uint64_t seed = 11);
};

struct SynthScene {
  /// Codes are zero logits; planted labels are kept separately.
  Scene scene;
  std::vector<int> planted;
  std::vector<ViewCamera> cameras;
  std::vector<LabelMap> label_maps;
};

/// Samples blob Gaussians and renders ground-truth masks from the planted one-hot labels.
SynthScene generate(const SynthSpec& spec, const ProjectionConfig& projection = {},
                    const RasterConfig& raster = {});

/// Camera at `position` looking at `target`, world +z up.
Camera look_at_camera(const Vec3& position, const Vec3& target, int width, int height, double fov_deg);

/// Ring camera at the given angle (radians) around the spec's look-at point.
Camera ring_camera(const SynthSpec& spec, double angle_rad);

/// Scene copy with raw one-hot codes of the given labels.
Scene with_one_hot_codes(const Scene& scene, std::span<const int> labels);

/// Argmax label map of a raw one-hot rendering of `labels`.
LabelMap render_label_map(const Scene& scene, std::span<const int> labels, const Camera& camera,
                          const ProjectionConfig& projection = {}, const RasterConfig& raster = {});

/// Gaussians scattered in front of a default camera with random shape, opacity and codes.
Scene random_scene(std::uint64_t seed, int count, int num_classes, double code_scale = 2.0);

/// Camera at (0, 0, -4) looking at the origin, used with random_scene.
Camera default_camera(int width, int height);

/// Untiled reference for the object-code blend: every projected splat, every pixel,
/// no early termination (alpha clamped to alpha_max as in the rasterizer).
SemanticImage oracle_render(const Scene& scene, const Camera& camera, CodeMode mode,
                            const ProjectionConfig& projection = {}, double alpha_max = 0.99);

/// Exhaustive k nearest neighbors of points[query], ties to the lowest index.
std::vector<int> oracle_knn(std::span<const Vec3> points, int query, int k);

/// Central difference of `loss` w.r.t. one object-code entry.
double finite_difference(const std::function<double(const Scene&)>& loss, const Scene& scene, int gaussian,
                         int channel, double h);

}  // namespace gsseg
