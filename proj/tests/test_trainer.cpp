#include "gsseg/eval.hpp"
#include "gsseg/refine.hpp"
#include "gsseg/synthetic.hpp"
#include "gsseg/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace gsseg {
namespace {

TEST(MakeOneHot, SinglePixel) {
  LabelMap m(1, 1);
  m.labels[0] = 2;
  const Eigen::MatrixXd oh = make_one_hot(m, 3);
  EXPECT_EQ(oh.col(0), Eigen::Vector3d(0, 0, 1));
}

TEST(MakeOneHot, AllBackground) {
  const Eigen::MatrixXd oh = make_one_hot(LabelMap(2, 2), 4);
  EXPECT_TRUE(oh.row(0).isOnes());
  EXPECT_TRUE(oh.bottomRows(3).isZero());
}

TEST(MakeOneHot, CountsMatchHistogram) {
  CounterRng rng(1, 0);
  LabelMap m(13, 7);
  std::vector<int> hist(5, 0);
  for (auto& l : m.labels) {
    l = static_cast<std::uint16_t>(rng.next_u64() % 5);
    ++hist[l];
  }
  const Eigen::MatrixXd oh = make_one_hot(m, 5);
  EXPECT_TRUE(oh.colwise().sum().isOnes());
  for (int c = 0; c < 5; ++c) EXPECT_EQ(oh.row(c).sum(), hist[c]);
}

TEST(MakeOneHot, LabelOutOfRangeThrows) {
  LabelMap m(1, 1);
  m.labels[0] = 3;
  EXPECT_THROW(make_one_hot(m, 3), std::invalid_argument);
}

TEST(CeLoss, PerfectPredictionIsZero) {
  LabelMap m(4, 1);
  m.labels = {0, 1, 2, 1};
  const Eigen::MatrixXd oh = make_one_hot(m, 3);
  EXPECT_DOUBLE_EQ(ce_loss(oh, oh, 1e-8).loss, 0.0);
}

TEST(CeLoss, ClosedForm) {
  const Eigen::MatrixXd m = Eigen::Vector2d(1, 0);
  const Eigen::MatrixXd r = Eigen::Vector2d(0.5, 0.5);
  EXPECT_NEAR(ce_loss(m, r, 1e-8).loss, 0.5 * -std::log(0.5), 1e-12);
  EXPECT_NEAR(ce_loss(m, r, 1e-8).loss, 0.3466, 1e-4);
}

TEST(CeLoss, ShapeMismatchThrows) {
  EXPECT_THROW(ce_loss(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 2), 1e-8), std::invalid_argument);
}

TEST(CeLoss, GradientMatchesFiniteDifferences) {
  CounterRng rng(2, 0);
  const int k = 4;
  const int n = 30;
  LabelMap m(n, 1);
  for (auto& l : m.labels) l = static_cast<std::uint16_t>(rng.next_u64() % k);
  const Eigen::MatrixXd oh = make_one_hot(m, k);
  Eigen::MatrixXd r(k, n);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(0.05, 1.0);
  const CrossEntropy ce = ce_loss(oh, r, 1e-8);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    Eigen::MatrixXd rp = r;
    Eigen::MatrixXd rm = r;
    rp.data()[i] += h;
    rm.data()[i] -= h;
    const double fd = (ce_loss(oh, rp, 1e-8).loss - ce_loss(oh, rm, 1e-8).loss) / (2 * h);
    const double a = ce.grad.data()[i];
    EXPECT_LE(std::abs(a - fd), 1e-6 * std::max({std::abs(a), std::abs(fd), 1e-6}));
  }
}

TEST(CeLoss, ClampedEntriesHaveZeroGradient) {
  const Eigen::MatrixXd m = Eigen::Vector2d(1, 0);
  const Eigen::MatrixXd r = Eigen::Vector2d(0.0, 1.0);
  const CrossEntropy ce = ce_loss(m, r, 1e-8);
  EXPECT_NEAR(ce.loss, -0.5 * std::log(1e-8), 1e-9);
  EXPECT_TRUE(ce.grad.isZero(0.0));
}

SynthScene small_fixture(int cameras, int size) {
  SynthSpec spec = SynthSpec::two_blob_demo();
  spec.ring.count = cameras;
  spec.width = spec.height = size;
  for (BlobSpec& b : spec.blobs) b.count = 150;
  return generate(spec);
}

std::vector<TrainView> views_of(const SynthScene& s) {
  std::vector<TrainView> views;
  for (std::size_t v = 0; v < s.cameras.size(); ++v) {
    views.push_back(make_train_view(s.cameras[v].camera, s.label_maps[v], s.scene.num_classes));
  }
  return views;
}

TEST(Train, ZeroIterationsLeavesCodes) {
  const SynthScene s = small_fixture(3, 48);
  Scene scene = s.scene;
  for (std::size_t i = 0; i < scene.size(); ++i) scene.gaussians[i].object_code = Eigen::Vector3d(0.1 * i, -1, 2);
  const Scene before = scene;
  TrainConfig cfg;
  cfg.iterations = 0;
  const TrainReport r = train(scene, views_of(s), cfg);
  EXPECT_EQ(scene.code_matrix(), before.code_matrix());
  EXPECT_TRUE(r.loss_curve.empty());
  EXPECT_EQ(r.iterations, 0);
  EXPECT_DOUBLE_EQ(r.initial_loss, r.final_loss);
}

TEST(Train, FourViewTwoBlob) {
  // Full-size blobs, four of the eight ring views.
  SynthSpec spec = SynthSpec::two_blob_demo();
  spec.ring.count = 4;
  const SynthScene s = generate(spec);
  Scene scene = s.scene;
  const TrainReport r = train(scene, views_of(s), TrainConfig{});
  EXPECT_LT(r.final_loss, 0.05);
  EXPECT_LT(r.final_loss, r.initial_loss);
  EXPECT_EQ(r.loss_curve.size(), 300u);
  EXPECT_EQ(r.final_view_ces.size(), 4u);
  EXPECT_GE(gaussian_accuracy(segment(scene), s.planted), 0.99);
}

TEST(Train, ConfidentCorrectCodesAreStable) {
  const SynthScene s = small_fixture(4, 48);
  Scene scene = s.scene;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    scene.gaussians[i].object_code = Eigen::VectorXd::Constant(3, -10.0);
    scene.gaussians[i].object_code[s.planted[i]] = 10.0;
  }
  const std::vector<TrainView> views = views_of(s);
  TrainConfig cfg;
  cfg.iterations = 10;
  const double start = objective(scene, views, cfg);
  for (int it = 1; it <= 10; ++it) {
    Scene step = scene;
    cfg.iterations = it;
    train(step, views, cfg);
    EXPECT_LE(objective(step, views, cfg), start + 1e-4) << "after " << it << " iterations";
  }
}

TEST(Train, SgdAlsoConverges) {
  const SynthScene s = small_fixture(4, 48);
  Scene scene = s.scene;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 500.0;
  cfg.iterations = 200;
  const TrainReport r = train(scene, views_of(s), cfg);
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(Train, RawModeRuns) {
  const SynthScene s = small_fixture(2, 32);
  Scene scene = s.scene;
  // Raw blending of zero codes renders 0 for object classes, where the log clamp has no gradient.
  for (Gaussian& g : scene.gaussians) g.object_code.setConstant(0.3);
  TrainConfig cfg;
  cfg.mode = CodeMode::kRaw;
  cfg.iterations = 20;
  cfg.learning_rate = 0.01;
  const TrainReport r = train(scene, views_of(s), cfg);
  EXPECT_LT(r.final_loss, r.initial_loss);
}

TEST(Train, DivergenceThrows) {
  const SynthScene s = small_fixture(2, 32);
  Scene scene = s.scene;
  TrainConfig cfg;
  // Adam steps are about lr in size, so the codes overflow within a few iterations.
  cfg.learning_rate = std::numeric_limits<double>::max();
  cfg.iterations = 5;
  EXPECT_THROW(train(scene, views_of(s), cfg), std::runtime_error);
}

TEST(Train, BadInputsThrow) {
  const SynthScene s = small_fixture(2, 32);
  Scene scene = s.scene;
  EXPECT_THROW(train(scene, {}, TrainConfig{}), std::invalid_argument);
  TrainConfig cfg;
  cfg.batch = 3;
  EXPECT_THROW(train(scene, views_of(s), cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(scene, views_of(s), cfg), std::invalid_argument);
  scene.gaussians[0].object_code[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(scene, views_of(s), TrainConfig{}), std::invalid_argument);
}

TEST(Train, ReportJsonHasCurve) {
  TrainReport r;
  r.iterations = 2;
  r.loss_curve = {0.5, 0.25};
  const std::string j = train_report_json(r);
  EXPECT_NE(j.find("\"loss_curve\""), std::string::npos);
  EXPECT_NE(j.find("0.25"), std::string::npos);
}

}  // namespace
}  // namespace gsseg
