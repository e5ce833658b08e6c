#include "gsseg/eval.hpp"
#include "gsseg/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace gsseg {
namespace {

LabelMap random_map(CounterRng& rng, int w, int h, int k) {
  LabelMap m(w, h);
  for (auto& l : m.labels) l = static_cast<std::uint16_t>(rng.next_u64() % k);
  return m;
}

TEST(Confusion, IdenticalMapsAreDiagonal) {
  CounterRng rng(1, 0);
  const LabelMap m = random_map(rng, 10, 8, 4);
  const ConfusionMatrix cm = confusion(m, m, 4);
  EXPECT_TRUE(cm.is_diagonal());
  EXPECT_EQ(cm.total(), 80);
}

TEST(Confusion, SinglePixel) {
  LabelMap gt(1, 1);
  LabelMap pred(1, 1);
  pred.labels[0] = 1;
  const ConfusionMatrix cm = confusion(gt, pred, 2);
  EXPECT_EQ(cm.at(0, 1), 1);
  EXPECT_EQ(cm.total(), 1);
}

TEST(Confusion, RowSumsAreGroundTruthHistogram) {
  CounterRng rng(2, 0);
  const LabelMap gt = random_map(rng, 17, 9, 5);
  const LabelMap pred = random_map(rng, 17, 9, 5);
  std::vector<std::int64_t> hist(5, 0);
  for (std::uint16_t l : gt.labels) ++hist[l];
  const ConfusionMatrix cm = confusion(gt, pred, 5);
  for (int g = 0; g < 5; ++g) {
    std::int64_t row = 0;
    for (int p = 0; p < 5; ++p) {
      EXPECT_GE(cm.at(g, p), 0);
      row += cm.at(g, p);
    }
    EXPECT_EQ(row, hist[g]);
  }
}

TEST(Confusion, AdditiveOverPartitions) {
  CounterRng rng(3, 0);
  const LabelMap gt = random_map(rng, 12, 12, 3);
  const LabelMap pred = random_map(rng, 12, 12, 3);
  ConfusionMatrix sum(3);
  for (int half = 0; half < 2; ++half) {
    LabelMap g(12, 6);
    LabelMap p(12, 6);
    for (int i = 0; i < 72; ++i) {
      g.labels[i] = gt.labels[half * 72 + i];
      p.labels[i] = pred.labels[half * 72 + i];
    }
    sum += confusion(g, p, 3);
  }
  EXPECT_EQ(sum.counts, confusion(gt, pred, 3).counts);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion(LabelMap(2, 2), LabelMap(2, 3), 2), std::invalid_argument);
  LabelMap bad(1, 1);
  bad.labels[0] = 2;
  EXPECT_THROW(confusion(bad, LabelMap(1, 1), 2), std::invalid_argument);
}

TEST(MiouMacc, PerfectPrediction) {
  CounterRng rng(4, 0);
  const LabelMap m = random_map(rng, 6, 6, 3);
  const MiouMacc r = miou_macc(confusion(m, m, 3));
  EXPECT_DOUBLE_EQ(r.miou, 1.0);
  EXPECT_DOUBLE_EQ(r.macc, 1.0);
}

TEST(MiouMacc, ClosedFormTwoByTwo) {
  ConfusionMatrix cm(2);
  cm.counts = {1, 1, 1, 1};
  const ClassScores s = class_scores(cm);
  EXPECT_DOUBLE_EQ(s.iou[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.iou[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.miou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.acc[0], 0.5);
  EXPECT_DOUBLE_EQ(s.macc, 0.5);
}

TEST(MiouMacc, AbsentClassesExcluded) {
  ConfusionMatrix cm(4);
  cm.at(0, 0) = 5;
  cm.at(1, 1) = 3;
  cm.at(1, 0) = 1;
  const ClassScores s = class_scores(cm);
  EXPECT_EQ(s.classes_used, 2);
  EXPECT_TRUE(std::isnan(s.iou[2]));
  EXPECT_TRUE(std::isnan(s.iou[3]));
  EXPECT_DOUBLE_EQ(s.miou, (5.0 / 6.0 + 3.0 / 4.0) / 2.0);
  const ClassScores fg = class_scores(cm, false);
  EXPECT_EQ(fg.classes_used, 1);
  EXPECT_DOUBLE_EQ(fg.miou, 0.75);
  EXPECT_DOUBLE_EQ(fg.macc, 0.75);
}

TEST(MiouMacc, EmptyMatrixThrows) {
  EXPECT_THROW(miou_macc(ConfusionMatrix(3)), std::invalid_argument);
  EXPECT_THROW(miou_macc(ConfusionMatrix{}), std::invalid_argument);
  ConfusionMatrix only_bg(2);
  only_bg.at(0, 0) = 4;
  EXPECT_THROW(miou_macc(only_bg, false), std::invalid_argument);
}

/// Independent formulation: IoU = TP / (row + col - TP), Acc = TP / row.
MiouMacc reference(const ConfusionMatrix& cm) {
  double iou = 0.0;
  double acc = 0.0;
  int used = 0;
  for (int c = 0; c < cm.num_classes; ++c) {
    double row = 0.0;
    double col = 0.0;
    for (int j = 0; j < cm.num_classes; ++j) {
      row += static_cast<double>(cm.at(c, j));
      col += static_cast<double>(cm.at(j, c));
    }
    if (row == 0.0) continue;
    const double tp = static_cast<double>(cm.at(c, c));
    iou += tp / (row + col - tp);
    acc += tp / row;
    ++used;
  }
  return {iou / used, acc / used};
}

TEST(MiouMacc, MatchesReferenceOnRandomMatrices) {
  CounterRng rng(5, 0);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.next_u64() % 6);
    ConfusionMatrix cm(k);
    for (auto& v : cm.counts) v = rng.uniform() < 0.3 ? 0 : static_cast<std::int64_t>(rng.next_u64() % 50);
    cm.at(0, 0) += 1;
    const MiouMacc a = miou_macc(cm);
    const MiouMacc b = reference(cm);
    EXPECT_NEAR(a.miou, b.miou, 1e-12);
    EXPECT_NEAR(a.macc, b.macc, 1e-12);
    EXPECT_GE(a.miou, 0.0);
    EXPECT_LE(a.miou, 1.0);
    EXPECT_GE(a.macc, 0.0);
    EXPECT_LE(a.macc, 1.0);
    EXPECT_EQ(a.miou == 1.0 && a.macc == 1.0, cm.is_diagonal());
  }
}

TEST(GaussianAccuracy, Cases) {
  Segmentation seg;
  seg.class_of = {0, 1, 2, 1};
  seg.confidence.assign(4, 1.0);
  EXPECT_DOUBLE_EQ(gaussian_accuracy(seg, std::vector<int>{0, 1, 2, 1}), 1.0);
  EXPECT_DOUBLE_EQ(gaussian_accuracy(seg, std::vector<int>{1, 2, 0, 0}), 0.0);
  EXPECT_THROW(gaussian_accuracy(seg, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST(GaussianAccuracy, KnownFlipCount) {
  CounterRng rng(6, 0);
  const int n = 1000;
  std::vector<int> planted(n);
  for (int& p : planted) p = static_cast<int>(rng.next_u64() % 3);
  Segmentation seg;
  seg.class_of = planted;
  seg.confidence.assign(n, 1.0);
  const int f = 137;
  for (int i = 0; i < f; ++i) seg.class_of[i * 7] = (planted[i * 7] + 1) % 3;
  EXPECT_DOUBLE_EQ(gaussian_accuracy(seg, planted), static_cast<double>(n - f) / n);
}

TEST(Evaluate, PooledAndPerView) {
  CounterRng rng(7, 0);
  std::vector<LabelMap> gt;
  std::vector<LabelMap> pred;
  ConfusionMatrix pooled(3);
  double miou_sum = 0.0;
  for (int v = 0; v < 4; ++v) {
    gt.push_back(random_map(rng, 9, 7, 3));
    pred.push_back(random_map(rng, 9, 7, 3));
    const ConfusionMatrix cm = confusion(gt.back(), pred.back(), 3);
    pooled += cm;
    miou_sum += miou_macc(cm).miou;
  }
  const EvalReport a = evaluate(gt, pred, 3);
  EXPECT_EQ(a.pooled.counts, pooled.counts);
  EXPECT_DOUBLE_EQ(a.scores.miou, miou_macc(pooled).miou);
  const EvalReport b = evaluate(gt, pred, 3, EvalProtocol::kPerView);
  EXPECT_EQ(b.per_view.size(), 4u);
  EXPECT_NEAR(b.scores.miou, miou_sum / 4, 1e-12);
  EXPECT_EQ(protocol_name(b), "per-view, background included");
  const std::vector<std::string> names = default_class_names(3);
  EXPECT_NE(eval_report_json(b, names).find("\"per_view\""), std::string::npos);
  EXPECT_NE(eval_report_table(a, names).find("mIoU"), std::string::npos);
  EXPECT_THROW(evaluate(gt, std::vector<LabelMap>{}, 3), std::invalid_argument);
}

}  // namespace
}  // namespace gsseg
