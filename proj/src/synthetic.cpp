#include "gsseg/synthetic.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace gsseg {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vec3 vec3_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

nlohmann::json vec3_to_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

std::uint64_t CounterRng::next_u64() {
  return splitmix64(splitmix64(seed_ ^ splitmix64(stream_)) + counter_++);
}

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double CounterRng::normal() {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vec3 CounterRng::unit_vector() {
  const double z = uniform(-1.0, 1.0);
  const double phi = uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Eigen::Quaterniond CounterRng::rotation() {
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(normal(), normal(), normal(), normal());
  } while (q.norm() < 1e-6);
  q.normalize();
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
}

int SynthSpec::resolved_num_classes() const {
  if (num_classes > 0) return num_classes;
  int max_class = 0;
  for (const BlobSpec& b : blobs) max_class = std::max(max_class, b.class_id);
  return std::max(max_class + 1, 2);
}

void SynthSpec::validate() const {
  if (ring.count <= 0) throw std::invalid_argument("synthetic spec needs at least one camera");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if (!(ring.fov_deg > 0.0 && ring.fov_deg < 180.0)) throw std::invalid_argument("fov must lie in (0, 180)");
  if (!(opacity > 0.0 && opacity <= 1.0)) throw std::invalid_argument("opacity must lie in (0, 1]");
  const int k = resolved_num_classes();
  if (k < 2) throw std::invalid_argument("need at least two classes");
  for (const BlobSpec& b : blobs) {
    if (b.count <= 0) throw std::invalid_argument("blob count must be positive");
    if (!(b.radius > 0.0)) throw std::invalid_argument("blob radius must be positive");
    if (b.class_id < 0 || b.class_id >= k) {
      throw std::invalid_argument("blob class id " + std::to_string(b.class_id) + " outside [0, K)");
    }
  }
}

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec spec;
  try {
    const nlohmann::json doc = nlohmann::json::parse(text);
    spec.seed = doc.value("seed", std::uint64_t{0});
    spec.width = doc.value("width", spec.width);
    spec.height = doc.value("height", spec.height);
    spec.num_classes = doc.value("num_classes", 0);
    spec.opacity = doc.value("opacity", spec.opacity);
    for (const nlohmann::json& b : doc.at("blobs")) {
      BlobSpec blob;
      blob.center = vec3_from_json(b.at("center"));
      blob.radius = b.at("radius").get<double>();
      blob.count = b.at("count").get<int>();
      blob.class_id = b.at("class_id").get<int>();
      if (b.contains("color")) blob.color = vec3_from_json(b.at("color"));
      spec.blobs.push_back(blob);
    }
    if (doc.contains("camera_ring")) {
      const nlohmann::json& r = doc.at("camera_ring");
      spec.ring.count = r.value("count", spec.ring.count);
      spec.ring.radius = r.value("radius", spec.ring.radius);
      spec.ring.height = r.value("height", spec.ring.height);
      if (r.contains("look_at")) spec.ring.look_at = vec3_from_json(r.at("look_at"));
      spec.ring.fov_deg = r.value("fov_deg", spec.ring.fov_deg);
      spec.ring.angle_offset_deg = r.value("angle_offset_deg", spec.ring.angle_offset_deg);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string SynthSpec::to_json() const {
  nlohmann::json blobs_json = nlohmann::json::array();
  for (const BlobSpec& b : blobs) {
    blobs_json.push_back({{"center", vec3_to_json(b.center)},
                          {"radius", b.radius},
                          {"count", b.count},
                          {"class_id", b.class_id},
                          {"color", vec3_to_json(b.color)}});
  }
  const nlohmann::json doc = {{"seed", seed},
                              {"width", width},
                              {"height", height},
                              {"num_classes", num_classes},
                              {"opacity", opacity},
                              {"blobs", blobs_json},
                              {"camera_ring",
                               {{"count", ring.count},
                                {"radius", ring.radius},
                                {"height", ring.height},
                                {"look_at", vec3_to_json(ring.look_at)},
                                {"fov_deg", ring.fov_deg},
                                {"angle_offset_deg", ring.angle_offset_deg}}}};
  return doc.dump(2);
}

SynthSpec SynthSpec::two_blob_demo(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.blobs = {{Vec3(-1.0, 0.0, 0.0), 0.5, 500, 1, Vec3(0.85, 0.2, 0.2)},
                {Vec3(1.0, 0.0, 0.0), 0.5, 500, 2, Vec3(0.2, 0.3, 0.85)}};
  spec.ring = CameraRing{};
  return spec;
}

SynthSpec SynthSpec::three_blob_demo(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.blobs = {{Vec3(-1.5, -0.5, 0.0), 0.5, 300, 1, Vec3(0.85, 0.2, 0.2)},
                {Vec3(1.5, -0.5, 0.0), 0.5, 300, 2, Vec3(0.2, 0.8, 0.3)},
                {Vec3(0.0, 1.5, 0.0), 0.5, 300, 3, Vec3(0.2, 0.3, 0.85)}};
  spec.ring = CameraRing{};
  spec.ring.radius = 5.0;
  return spec;
}

Camera look_at_camera(const Vec3& position, const Vec3& target, int width, int height, double fov_deg) {
  const Vec3 forward = (target - position).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3::UnitY();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);

  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  cam.fy = cam.fx;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = r;
  cam.world_to_camera.topRightCorner<3, 1>() = -r * position;
  return cam;
}

Camera ring_camera(const SynthSpec& spec, double angle_rad) {
  const CameraRing& ring = spec.ring;
  const Vec3 position = ring.look_at + Vec3(ring.radius * std::cos(angle_rad), ring.radius * std::sin(angle_rad),
                                            ring.height);
  return look_at_camera(position, ring.look_at, spec.width, spec.height, ring.fov_deg);
}

Scene with_one_hot_codes(const Scene& scene, std::span<const int> labels) {
  if (labels.size() != scene.size()) throw std::invalid_argument("label count does not match scene");
  Scene out = scene;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.gaussians[i].object_code = Eigen::VectorXd::Zero(scene.num_classes);
    out.gaussians[i].object_code[labels[i]] = 1.0;
  }
  return out;
}

LabelMap render_label_map(const Scene& scene, std::span<const int> labels, const Camera& camera,
                          const ProjectionConfig& projection, const RasterConfig& raster) {
  const Scene planted = with_one_hot_codes(scene, labels);
  const SplatList splats = project(planted, camera, projection);
  return argmax_labels(render_semantic(planted, splats, CodeMode::kRaw, raster).image);
}

SynthScene generate(const SynthSpec& spec, const ProjectionConfig& projection, const RasterConfig& raster) {
  spec.validate();
  const int k = spec.resolved_num_classes();
  SynthScene out;
  out.scene = Scene::with_classes(k);

  std::uint64_t stream = 0;
  for (const BlobSpec& blob : spec.blobs) {
    const double scale = blob.radius / std::cbrt(static_cast<double>(blob.count));
    for (int j = 0; j < blob.count; ++j, ++stream) {
      CounterRng rng(spec.seed, stream);
      Gaussian g;
      const Vec3 dir = rng.unit_vector();
      const double r = blob.radius * std::cbrt(rng.uniform());
      g.mean = blob.center + r * dir;
      g.scale = Vec3::Constant(scale);
      g.rotation = rng.rotation();
      g.opacity = spec.opacity;
      g.color_dc = (blob.color.array() - 0.5) / kShC0;
      g.object_code = Eigen::VectorXd::Zero(k);
      out.scene.gaussians.push_back(std::move(g));
      out.planted.push_back(blob.class_id);
    }
  }

  for (int c = 0; c < spec.ring.count; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / spec.ring.count +
                         spec.ring.angle_offset_deg * std::numbers::pi / 180.0;
    ViewCamera view{c, ring_camera(spec, angle)};
    view.camera.validate();
    out.label_maps.push_back(render_label_map(out.scene, out.planted, view.camera, projection, raster));
    out.cameras.push_back(view);
  }
  return out;
}

Camera default_camera(int width, int height) {
  return look_at_camera(Vec3(0.0, -4.0, 0.0), Vec3::Zero(), width, height, 50.0);
}

Scene random_scene(std::uint64_t seed, int count, int num_classes, double code_scale) {
  Scene scene = Scene::with_classes(num_classes);
  for (int i = 0; i < count; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    Gaussian g;
    g.mean = Vec3(rng.uniform(-1.2, 1.2), rng.uniform(-1.0, 1.0), rng.uniform(-1.2, 1.2));
    g.scale = Vec3(rng.uniform(0.03, 0.25), rng.uniform(0.03, 0.25), rng.uniform(0.03, 0.25));
    g.rotation = rng.rotation();
    g.opacity = rng.uniform(0.05, 1.0);
    g.color_dc = Vec3(rng.normal(), rng.normal(), rng.normal());
    g.object_code.resize(num_classes);
    for (int c = 0; c < num_classes; ++c) g.object_code[c] = code_scale * rng.normal();
    scene.gaussians.push_back(std::move(g));
  }
  return scene;
}

SemanticImage oracle_render(const Scene& scene, const Camera& camera, CodeMode mode,
                            const ProjectionConfig& projection, double alpha_max) {
  const SplatList list = project(scene, camera, projection);
  const int k = scene.num_classes;
  SemanticImage image;
  image.width = camera.width;
  image.height = camera.height;
  image.mode = mode;
  image.data = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(camera.pixel_count()));

  std::vector<Eigen::VectorXd> values(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::VectorXd& o = scene.gaussians[i].object_code;
    if (mode == CodeMode::kRaw) {
      values[i] = o;
    } else {
      const Eigen::ArrayXd e = (o.array() - o.maxCoeff()).exp();
      values[i] = (e / e.sum()).matrix();
    }
  }

  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      Eigen::VectorXd color = Eigen::VectorXd::Zero(k);
      double transmittance = 1.0;
      for (const Splat2D& s : list.splats) {
        const Vec2 d = Vec2(x, y) - s.center_px;
        const double mahalanobis = d.dot(s.cov2d.inverse() * d);
        const double alpha = std::min(alpha_max, s.opacity * std::exp(-0.5 * mahalanobis));
        color += alpha * transmittance * values[s.gaussian_index];
        transmittance *= 1.0 - alpha;
      }
      color[kBackgroundClass] += transmittance;
      image.data.col(static_cast<Eigen::Index>(y) * camera.width + x) = color;
    }
  }
  return image;
}

std::vector<int> oracle_knn(std::span<const Vec3> points, int query, int k) {
  std::vector<std::pair<double, int>> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (static_cast<int>(i) == query) continue;
    const Vec3 d = points[i] - points[query];
    all.emplace_back(d.x() * d.x() + d.y() * d.y() + d.z() * d.z(), static_cast<int>(i));
  }
  const std::size_t take = std::min<std::size_t>(std::max(k, 0), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  std::vector<int> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = all[i].second;
  return out;
}

double finite_difference(const std::function<double(const Scene&)>& loss, const Scene& scene, int gaussian,
                         int channel, double h) {
  Scene probe = scene;
  const double base = scene.gaussians.at(gaussian).object_code[channel];
  probe.gaussians[gaussian].object_code[channel] = base + h;
  const double plus = loss(probe);
  probe.gaussians[gaussian].object_code[channel] = base - h;
  const double minus = loss(probe);
  return (plus - minus) / (2.0 * h);
}

}  // namespace gsseg
