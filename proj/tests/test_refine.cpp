#include "gsseg/refine.hpp"
#include "gsseg/scene_io.hpp"
#include "gsseg/synthetic.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace gsseg {
namespace {

Gaussian at(const Vec3& p, const Eigen::VectorXd& code) {
  Gaussian g;
  g.mean = p;
  g.scale = Vec3::Constant(0.05);
  g.opacity = 0.8;
  g.object_code = code;
  return g;
}

Scene cloud(std::uint64_t seed, int n, int k, double spread, const Vec3& center, const Eigen::VectorXd& code) {
  CounterRng rng(seed, 0);
  Scene s = Scene::with_classes(k);
  for (int i = 0; i < n; ++i) {
    s.gaussians.push_back(at(center + spread * Vec3(rng.normal(), rng.normal(), rng.normal()), code));
  }
  return s;
}

/// Exhaustive re-implementation of the refinement rule for comparison.
Scene brute_refine(const Scene& scene, const RefineConfig& cfg) {
  std::vector<Vec3> pts;
  for (const Gaussian& g : scene.gaussians) pts.push_back(g.mean);
  Scene out = scene;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::VectorXd p = softmax(scene.gaussians[i].object_code);
    if (!(p.maxCoeff() < cfg.beta)) continue;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(scene.num_classes);
    const std::vector<int> nb = oracle_knn(pts, static_cast<int>(i), cfg.k);
    for (int j : nb) sum += scene.gaussians[j].object_code;
    out.gaussians[i].object_code = sum / static_cast<double>(nb.size());
  }
  return out;
}

/// Exhaustive recomputation of the statistical filter's removal set.
std::vector<int> brute_removed(const Scene& scene, const Segmentation& seg, int cls, int k, double mult) {
  std::vector<int> members;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (seg.class_of[i] == cls) members.push_back(static_cast<int>(i));
  }
  if (members.size() < static_cast<std::size_t>(k) + 1) return {};
  std::vector<double> d(members.size());
  for (std::size_t a = 0; a < members.size(); ++a) {
    std::vector<double> dist;
    for (std::size_t b = 0; b < members.size(); ++b) {
      if (a != b) dist.push_back((scene.gaussians[members[a]].mean - scene.gaussians[members[b]].mean).norm());
    }
    std::sort(dist.begin(), dist.end());
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += dist[j];
    d[a] = sum / k;
  }
  double mu = 0.0;
  for (double v : d) mu += v;
  mu /= d.size();
  double var = 0.0;
  for (double v : d) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / d.size());
  std::vector<int> removed;
  for (std::size_t a = 0; a < members.size(); ++a) {
    if (d[a] > mu + mult * sigma) removed.push_back(members[a]);
  }
  return removed;
}

TEST(SelectAmbiguous, ClosedFormCases) {
  Scene s = Scene::with_classes(4);
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector4d::Zero()));
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector4d(10, 0, 0, 0)));
  EXPECT_EQ(select_ambiguous(s, 0.65), (std::vector<int>{0}));
}

TEST(SelectAmbiguous, MatchesDirectEvaluation) {
  const Scene s = random_scene(4, 300, 5, 1.5);
  std::vector<int> expect;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Eigen::ArrayXd e = s.gaussians[i].object_code.array().exp();
    if ((e / e.sum()).maxCoeff() < 0.65) expect.push_back(static_cast<int>(i));
  }
  EXPECT_EQ(select_ambiguous(s, 0.65), expect);
  EXPECT_FALSE(expect.empty());
}

TEST(KnnRefine, UniformNeighborhoodCopiesCode) {
  const Eigen::Vector3d c(-2, 4, 1);
  Scene s = cloud(5, 60, 3, 0.2, Vec3::Zero(), c);
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d::Zero()));
  RefineConfig cfg;
  cfg.k = 20;
  const Scene r = knn_refine(s, cfg);
  EXPECT_EQ(r.gaussians.back().object_code, Eigen::VectorXd(c));
}

TEST(KnnRefine, NoAmbiguousIsIdentity) {
  Scene s = cloud(6, 80, 3, 0.5, Vec3::Zero(), Eigen::Vector3d(0, 8, 0));
  const Scene r = knn_refine(s, RefineConfig{});
  EXPECT_EQ(r.code_matrix(), s.code_matrix());
  testing::TempDir dir("refine");
  save_scene(s, dir / "a.ply");
  save_scene(r, dir / "b.ply");
  EXPECT_EQ(testing::read_bytes(dir / "a.ply"), testing::read_bytes(dir / "b.ply"));
}

TEST(KnnRefine, MatchesExhaustiveOracle) {
  const Scene s = random_scene(7, 200, 4, 1.0);
  ASSERT_FALSE(select_ambiguous(s, 0.65).empty());
  const Scene r = knn_refine(s, RefineConfig{});
  EXPECT_EQ(r.code_matrix(), brute_refine(s, RefineConfig{}).code_matrix());
}

TEST(KnnRefine, UsesInputSnapshot) {
  // Two ambiguous neighbors must not see each other's refined codes.
  Scene s = Scene::with_classes(2);
  s.gaussians.push_back(at(Vec3(0, 0, 0), Eigen::Vector2d(0, 0)));
  s.gaussians.push_back(at(Vec3(0.1, 0, 0), Eigen::Vector2d(0.1, 0)));
  s.gaussians.push_back(at(Vec3(5, 0, 0), Eigen::Vector2d(0, 6)));
  RefineConfig cfg;
  cfg.k = 1;
  const Scene r = knn_refine(s, cfg);
  EXPECT_EQ(r.gaussians[0].object_code, Eigen::VectorXd(Eigen::Vector2d(0.1, 0)));
  EXPECT_EQ(r.gaussians[1].object_code, Eigen::VectorXd(Eigen::Vector2d(0, 0)));
}

TEST(KnnRefine, KTooLargeThrows) {
  const Scene s = random_scene(8, 50, 3);
  EXPECT_THROW(knn_refine(s, RefineConfig{}), std::invalid_argument);
  RefineConfig cfg;
  cfg.beta = 1.5;
  EXPECT_THROW(knn_refine(random_scene(8, 100, 3), cfg), std::invalid_argument);
}

TEST(Segment, ClosedFormCases) {
  Scene s = Scene::with_classes(3);
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d(0, 5, 1)));
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d(0, 0, 0)));
  const Segmentation seg = segment(s);
  EXPECT_EQ(seg.class_of, (std::vector<int>{1, 0}));
  EXPECT_NEAR(seg.confidence[1], 1.0 / 3.0, 1e-15);
}

TEST(Segment, ArgmaxOfSoftmaxEqualsArgmaxOfCode) {
  const Scene s = random_scene(9, 400, 6);
  const Segmentation seg = segment(s);
  for (std::size_t i = 0; i < s.size(); ++i) {
    Eigen::Index a = 0;
    softmax(s.gaussians[i].object_code).maxCoeff(&a);
    EXPECT_EQ(seg.class_of[i], a);
  }
}

TEST(StatisticalFilter, RegularSimplexKeepsAll) {
  // Tetrahedron vertices with an even count of minus signs: all pairwise distances equal.
  Scene s = Scene::with_classes(2);
  for (const Vec3& p : {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)}) {
    s.gaussians.push_back(at(p, Eigen::Vector2d(0, 5)));
  }
  RefineConfig cfg;
  cfg.filter_k = 3;
  const FilterResult r = statistical_filter(s, segment(s), 1, cfg);
  EXPECT_FALSE(r.too_small);
  EXPECT_EQ(r.sigma, 0.0);
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.kept.size(), 4u);
}

TEST(StatisticalFilter, PlantedOutlierRemoved) {
  Scene s = cloud(10, 100, 2, 0.1, Vec3::Zero(), Eigen::Vector2d(0, 5));
  s.gaussians.push_back(at(Vec3(10, 0, 0), Eigen::Vector2d(0, 5)));
  RefineConfig cfg;
  cfg.filter_k = 10;
  const FilterResult r = statistical_filter(s, segment(s), 1, cfg);
  EXPECT_EQ(r.removed, (std::vector<int>{100}));
  EXPECT_EQ(r.kept.size(), 100u);
  EXPECT_EQ(r.segmentation.class_of[100], kBackgroundClass);
}

TEST(StatisticalFilter, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = random_scene(20 + seed, 150, 3, 3.0);
    const Segmentation seg = segment(s);
    RefineConfig cfg;
    cfg.filter_k = 8;
    for (int c = 1; c < 3; ++c) {
      EXPECT_EQ(statistical_filter(s, seg, c, cfg).removed, brute_removed(s, seg, c, 8, 1.0));
    }
  }
}

TEST(StatisticalFilter, SmallClassIsFlagged) {
  Scene s = cloud(11, 5, 2, 0.1, Vec3::Zero(), Eigen::Vector2d(0, 5));
  const FilterResult r = statistical_filter(s, segment(s), 1, RefineConfig{});
  EXPECT_TRUE(r.too_small);
  EXPECT_EQ(r.kept.size(), 5u);
  EXPECT_TRUE(r.removed.empty());
}

TEST(FilterAllClasses, OnlyForegroundClassesTouched) {
  Scene s = cloud(12, 80, 3, 0.1, Vec3::Zero(), Eigen::Vector3d(0, 5, 0));
  const Scene b = cloud(13, 80, 3, 0.1, Vec3(3, 0, 0), Eigen::Vector3d(0, 0, 5));
  s.gaussians.insert(s.gaussians.end(), b.gaussians.begin(), b.gaussians.end());
  s.gaussians.push_back(at(Vec3(-6, 0, 0), Eigen::Vector3d(0, 5, 0)));
  s.gaussians.push_back(at(Vec3(9, 0, 0), Eigen::Vector3d(0, 0, 5)));
  RefineConfig cfg;
  cfg.filter_k = 10;
  std::vector<FilterResult> details;
  const Segmentation out = filter_all_classes(s, segment(s), cfg, &details);
  ASSERT_EQ(details.size(), 2u);
  EXPECT_EQ(out.class_of[160], kBackgroundClass);
  EXPECT_EQ(out.class_of[161], kBackgroundClass);
}

TEST(Extract, AllClassesPreservesScene) {
  const Scene s = random_scene(14, 60, 3);
  const Segmentation seg = segment(s);
  const Scene all = extract_objects(s, seg, std::vector<int>{0, 1, 2});
  EXPECT_EQ(all.size(), s.size());
  EXPECT_EQ(all.code_matrix(), s.code_matrix());
  EXPECT_EQ(extract_objects(s, seg, std::vector<int>{}).size(), 0u);
}

TEST(Extract, SelectsClassMembersInOrder) {
  const Scene s = random_scene(15, 100, 4);
  const Segmentation seg = segment(s);
  const std::vector<int> ids = {1, 3};
  const std::vector<int> idx = select_classes(seg, ids);
  const Scene sub = extract_objects(s, seg, ids);
  ASSERT_EQ(sub.size(), idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    EXPECT_EQ(sub.gaussians[j].mean, s.gaussians[idx[j]].mean);
    EXPECT_TRUE(seg.class_of[idx[j]] == 1 || seg.class_of[idx[j]] == 3);
  }
  EXPECT_THROW(extract_objects(s, seg, std::vector<int>{4}), std::invalid_argument);
}

TEST(LabeledScene, DropsFilteredGaussians) {
  Scene s = Scene::with_classes(3);
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d(5, 0, 0)));
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d(0, 5, 0)));
  s.gaussians.push_back(at(Vec3::Zero(), Eigen::Vector3d(0, 0, 5)));
  Segmentation seg = segment(s);
  seg.class_of[2] = kBackgroundClass;
  const Scene l = labeled_scene(s, seg);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l.gaussians[0].object_code, Eigen::VectorXd(Eigen::Vector3d(1, 0, 0)));
  EXPECT_EQ(l.gaussians[1].object_code, Eigen::VectorXd(Eigen::Vector3d(0, 1, 0)));
}

TEST(Colorize, UsesPalette) {
  const Scene s = random_scene(16, 10, 3);
  const Segmentation seg = segment(s);
  const Scene c = colorize(s, seg);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec3 rgb = (kShC0 * c.gaussians[i].color_dc.array() + 0.5).matrix();
    EXPECT_TRUE(rgb.isApprox(class_color(seg.class_of[i]), 1e-12));
  }
  EXPECT_NE(class_color(3), class_color(4));
  const Vec3 big = class_color(40);
  EXPECT_TRUE((big.array() >= 0.0).all() && (big.array() <= 1.0).all());
}

TEST(SegmentationIo, RoundTrip) {
  testing::TempDir dir("seg");
  const Scene s = random_scene(17, 40, 3);
  const Segmentation seg = segment(s);
  save_segmentation(s, seg, dir / "seg.json");
  const Segmentation back = load_segmentation(dir / "seg.json");
  EXPECT_EQ(back.class_of, seg.class_of);
  EXPECT_EQ(back.confidence, seg.confidence);
  std::ofstream(dir / "bad.json") << "{\"class_of\": [1, 2]}";
  EXPECT_THROW(load_segmentation(dir / "bad.json"), FormatError);
}

}  // namespace
}  // namespace gsseg
