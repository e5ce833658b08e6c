#include "gsseg/refine.hpp"

#include "gsseg/kdtree.hpp"
#include "gsseg/parallel.hpp"
#include "gsseg/scene_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace gsseg {

void RefineConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0, 1)");
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (filter_k < 1) throw std::invalid_argument("filter_k must be at least 1");
  if (!(filter_std_mult >= 0.0)) throw std::invalid_argument("filter_std_mult must be non-negative");
}

std::vector<int> select_ambiguous(const Scene& scene, double beta) {
  std::vector<int> out;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (softmax(scene.gaussians[i].object_code).maxCoeff() < beta) out.push_back(static_cast<int>(i));
  }
  return out;
}

Scene knn_refine(const Scene& scene, const RefineConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(config.k) >= scene.size()) {
    throw std::invalid_argument("k = " + std::to_string(config.k) + " needs more than k Gaussians, scene has " +
                                std::to_string(scene.size()));
  }
  const std::vector<int> ambiguous = select_ambiguous(scene, config.beta);
  Scene out = scene;
  if (ambiguous.empty()) return out;

  std::vector<Vec3> centers(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) centers[i] = scene.gaussians[i].mean;
  const KdTree tree(centers);

  std::vector<Eigen::VectorXd> updates(ambiguous.size());
  parallel_for(ambiguous.size(), [&](std::size_t q, int) {
    const int idx = ambiguous[q];
    const std::vector<int> nbrs = tree.knn(centers[idx], config.k, idx);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(scene.num_classes);
    for (int n : nbrs) sum += scene.gaussians[n].object_code;
    updates[q] = sum / static_cast<double>(nbrs.size());
  });
  for (std::size_t q = 0; q < ambiguous.size(); ++q) {
    out.gaussians[ambiguous[q]].object_code = std::move(updates[q]);
  }
  return out;
}

Segmentation segment(const Scene& scene) {
  Segmentation seg;
  seg.class_of.resize(scene.size());
  seg.confidence.resize(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::VectorXd& code = scene.gaussians[i].object_code;
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < code.size(); ++c) {
      if (code[c] > code[best]) best = c;
    }
    seg.class_of[i] = static_cast<int>(best);
    seg.confidence[i] = softmax(code)[best];
  }
  return seg;
}

FilterResult statistical_filter(const Scene& scene, const Segmentation& seg, int class_id,
                                const RefineConfig& config) {
  config.validate();
  if (seg.size() != scene.size()) throw std::invalid_argument("segmentation does not match scene");
  FilterResult result;
  result.segmentation = seg;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg.class_of[i] == class_id) result.members.push_back(static_cast<int>(i));
  }
  if (result.members.size() < static_cast<std::size_t>(config.filter_k) + 1) {
    result.too_small = true;
    result.kept = result.members;
    return result;
  }

  std::vector<Vec3> points(result.members.size());
  for (std::size_t m = 0; m < points.size(); ++m) points[m] = scene.gaussians[result.members[m]].mean;
  const KdTree tree(points);

  result.mean_distance.resize(points.size());
  parallel_for(points.size(), [&](std::size_t m, int) {
    std::vector<int> idx;
    std::vector<double> sq;
    tree.knn(points[m], config.filter_k, static_cast<int>(m), idx, sq);
    double sum = 0.0;
    for (double d2 : sq) sum += std::sqrt(d2);
    result.mean_distance[m] = sum / static_cast<double>(sq.size());
  });

  double mu = 0.0;
  for (double d : result.mean_distance) mu += d;
  mu /= static_cast<double>(points.size());
  double var = 0.0;
  for (double d : result.mean_distance) var += (d - mu) * (d - mu);
  var /= static_cast<double>(points.size());
  result.mu = mu;
  result.sigma = std::sqrt(var);

  const double threshold = mu + config.filter_std_mult * result.sigma;
  for (std::size_t m = 0; m < points.size(); ++m) {
    const int idx = result.members[m];
    if (result.mean_distance[m] > threshold) {
      result.removed.push_back(idx);
      result.segmentation.class_of[idx] = kBackgroundClass;
    } else {
      result.kept.push_back(idx);
    }
  }
  return result;
}

Segmentation filter_all_classes(const Scene& scene, const Segmentation& seg, const RefineConfig& config,
                                std::vector<FilterResult>* details) {
  Segmentation current = seg;
  if (details != nullptr) details->clear();
  for (int c = 1; c < scene.num_classes; ++c) {
    FilterResult r = statistical_filter(scene, seg, c, config);
    if (r.too_small && !r.members.empty()) {
      std::cerr << "warning: class " << c << " has " << r.members.size() << " members, fewer than filter_k + 1 = "
                << config.filter_k + 1 << "; not filtered\n";
    }
    for (int idx : r.removed) current.class_of[idx] = kBackgroundClass;
    if (details != nullptr) details->push_back(std::move(r));
  }
  return current;
}

std::vector<int> select_classes(const Segmentation& seg, std::span<const int> class_ids) {
  std::vector<int> out;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (std::find(class_ids.begin(), class_ids.end(), seg.class_of[i]) != class_ids.end()) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

Scene extract_objects(const Scene& scene, const Segmentation& seg, std::span<const int> class_ids) {
  if (seg.size() != scene.size()) throw std::invalid_argument("segmentation does not match scene");
  for (int c : class_ids) {
    if (c < 0 || c >= scene.num_classes) throw std::invalid_argument("unknown class id " + std::to_string(c));
  }
  Scene out = Scene::with_classes(scene.num_classes);
  out.class_names = scene.class_names;
  for (int idx : select_classes(seg, class_ids)) out.gaussians.push_back(scene.gaussians[idx]);
  return out;
}

Scene labeled_scene(const Scene& scene, const Segmentation& seg) {
  if (seg.size() != scene.size()) throw std::invalid_argument("segmentation does not match scene");
  const Segmentation own = segment(scene);
  Scene out = Scene::with_classes(scene.num_classes);
  out.class_names = scene.class_names;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const int c = seg.class_of[i];
    if (c < 0 || c >= scene.num_classes) throw std::invalid_argument("segmentation class outside [0, K)");
    if (c == kBackgroundClass && own.class_of[i] != kBackgroundClass) continue;
    Gaussian g = scene.gaussians[i];
    g.object_code = Eigen::VectorXd::Zero(scene.num_classes);
    g.object_code[c] = 1.0;
    out.gaussians.push_back(std::move(g));
  }
  return out;
}

Vec3 class_color(int class_id) {
  static const std::array<Vec3, 10> palette = {
      Vec3(0.25, 0.25, 0.25), Vec3(0.90, 0.10, 0.10), Vec3(0.10, 0.70, 0.20), Vec3(0.15, 0.35, 0.90),
      Vec3(0.95, 0.80, 0.10), Vec3(0.80, 0.20, 0.80), Vec3(0.10, 0.80, 0.80), Vec3(0.95, 0.50, 0.10),
      Vec3(0.55, 0.35, 0.20), Vec3(0.60, 0.90, 0.40)};
  if (class_id < static_cast<int>(palette.size())) return palette[class_id];
  // Golden-ratio hue walk for larger class counts.
  const double h = std::fmod(class_id * 0.618033988749895, 1.0) * 6.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  switch (static_cast<int>(h)) {
    case 0: return {1.0, x, 0.0};
    case 1: return {x, 1.0, 0.0};
    case 2: return {0.0, 1.0, x};
    case 3: return {0.0, x, 1.0};
    case 4: return {x, 0.0, 1.0};
    default: return {1.0, 0.0, x};
  }
}

Scene colorize(const Scene& scene, const Segmentation& seg) {
  if (seg.size() != scene.size()) throw std::invalid_argument("segmentation does not match scene");
  Scene out = scene;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.gaussians[i].color_dc = (class_color(seg.class_of[i]).array() - 0.5) / kShC0;
    std::fill(out.gaussians[i].sh_rest.begin(), out.gaussians[i].sh_rest.end(), 0.0);
  }
  return out;
}

void save_segmentation(const Scene& scene, const Segmentation& seg, const std::filesystem::path& path) {
  if (seg.size() != scene.size()) throw std::invalid_argument("segmentation does not match scene");
  std::vector<int> counts(scene.num_classes, 0);
  for (int c : seg.class_of) ++counts.at(c);
  nlohmann::json doc = {{"num_classes", scene.num_classes},
                        {"class_names", scene.class_names},
                        {"class_counts", counts},
                        {"class_of", seg.class_of},
                        {"confidence", seg.confidence}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write segmentation '" + path.string() + "'");
  out << doc.dump() << "\n";
}

Segmentation load_segmentation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open segmentation '" + path.string() + "'");
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    Segmentation seg;
    seg.class_of = doc.at("class_of").get<std::vector<int>>();
    seg.confidence = doc.at("confidence").get<std::vector<double>>();
    if (seg.class_of.size() != seg.confidence.size()) {
      throw FormatError("segmentation '" + path.string() + "': class_of and confidence differ in length");
    }
    return seg;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("segmentation '" + path.string() + "': " + e.what());
  }
}

}  // namespace gsseg
