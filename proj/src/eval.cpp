#include "gsseg/eval.hpp"

#include "gsseg/parallel.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gsseg {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json nullable(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

std::string class_label(std::span<const std::string> names, int c) {
  return c < static_cast<int>(names.size()) ? names[c] : "class_" + std::to_string(c);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int k) : num_classes(k), counts(static_cast<std::size_t>(k) * k, 0) {
  if (k < 1) throw std::invalid_argument("confusion matrix needs at least one class");
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

bool ConfusionMatrix::is_diagonal() const {
  for (int g = 0; g < num_classes; ++g) {
    for (int p = 0; p < num_classes; ++p) {
      if (g != p && at(g, p) != 0) return false;
    }
  }
  return true;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes != num_classes) throw std::invalid_argument("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion(const LabelMap& gt, const LabelMap& pred, int num_classes) {
  if (gt.width != pred.width || gt.height != pred.height) {
    throw std::invalid_argument("label maps differ in size: " + std::to_string(gt.width) + "x" +
                                std::to_string(gt.height) + " vs " + std::to_string(pred.width) + "x" +
                                std::to_string(pred.height));
  }
  ConfusionMatrix cm(num_classes);
  for (std::size_t n = 0; n < gt.labels.size(); ++n) {
    const int g = gt.labels[n];
    const int p = pred.labels[n];
    if (g >= num_classes || p >= num_classes) throw std::invalid_argument("label outside [0, K)");
    ++cm.at(g, p);
  }
  return cm;
}

ClassScores class_scores(const ConfusionMatrix& cm, bool include_background) {
  if (cm.num_classes < 1 || cm.total() == 0) throw std::invalid_argument("empty confusion matrix");
  const int k = cm.num_classes;
  ClassScores s;
  s.iou.assign(k, kNaN);
  s.acc.assign(k, kNaN);
  double iou_sum = 0.0;
  double acc_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    std::int64_t row = 0;
    std::int64_t col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t fn = row - tp;
    const std::int64_t fp = col - tp;
    if (row == 0) continue;  // absent from ground truth
    s.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    s.acc[c] = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (c == kBackgroundClass && !include_background) continue;
    iou_sum += s.iou[c];
    acc_sum += s.acc[c];
    ++s.classes_used;
  }
  if (s.classes_used == 0) throw std::invalid_argument("no ground-truth classes to average");
  s.miou = iou_sum / s.classes_used;
  s.macc = acc_sum / s.classes_used;
  return s;
}

MiouMacc miou_macc(const ConfusionMatrix& cm, bool include_background) {
  const ClassScores s = class_scores(cm, include_background);
  return {s.miou, s.macc};
}

double gaussian_accuracy(const Segmentation& seg, std::span<const int> planted) {
  if (seg.size() != planted.size()) {
    throw std::invalid_argument("segmentation has " + std::to_string(seg.size()) + " labels, planted has " +
                                std::to_string(planted.size()));
  }
  if (planted.empty()) throw std::invalid_argument("no Gaussians to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < planted.size(); ++i) hits += seg.class_of[i] == planted[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(planted.size());
}

EvalReport evaluate(std::span<const LabelMap> gt, std::span<const LabelMap> pred, int num_classes,
                    EvalProtocol protocol, bool include_background) {
  if (gt.size() != pred.size()) throw std::invalid_argument("ground truth and prediction view counts differ");
  if (gt.empty()) throw std::invalid_argument("no views to evaluate");
  std::vector<ConfusionMatrix> per(gt.size());
  parallel_for(gt.size(), [&](std::size_t v, int) { per[v] = confusion(gt[v], pred[v], num_classes); });

  EvalReport report;
  report.protocol = protocol;
  report.include_background = include_background;
  report.pooled = ConfusionMatrix(num_classes);
  for (const ConfusionMatrix& cm : per) report.pooled += cm;

  if (protocol == EvalProtocol::kPooled) {
    report.scores = class_scores(report.pooled, include_background);
    return report;
  }
  // Per-view: class columns are means over the views where the class is scored.
  report.scores.iou.assign(num_classes, 0.0);
  report.scores.acc.assign(num_classes, 0.0);
  std::vector<int> seen(num_classes, 0);
  for (const ConfusionMatrix& cm : per) {
    const ClassScores s = class_scores(cm, include_background);
    report.per_view.push_back({s.miou, s.macc});
    for (int c = 0; c < num_classes; ++c) {
      if (std::isnan(s.iou[c])) continue;
      report.scores.iou[c] += s.iou[c];
      report.scores.acc[c] += s.acc[c];
      ++seen[c];
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    report.scores.iou[c] = seen[c] > 0 ? report.scores.iou[c] / seen[c] : kNaN;
    report.scores.acc[c] = seen[c] > 0 ? report.scores.acc[c] / seen[c] : kNaN;
    if (seen[c] > 0 && (c != kBackgroundClass || include_background)) ++report.scores.classes_used;
  }
  for (const MiouMacc& m : report.per_view) {
    report.scores.miou += m.miou;
    report.scores.macc += m.macc;
  }
  report.scores.miou /= static_cast<double>(report.per_view.size());
  report.scores.macc /= static_cast<double>(report.per_view.size());
  return report;
}

std::string protocol_name(const EvalReport& report) {
  std::string name = report.protocol == EvalProtocol::kPooled ? "pooled" : "per-view";
  name += report.include_background ? ", background included" : ", background excluded";
  return name;
}

std::string eval_report_json(const EvalReport& report, std::span<const std::string> class_names) {
  nlohmann::json classes = nlohmann::json::array();
  for (int c = 0; c < report.pooled.num_classes; ++c) {
    classes.push_back({{"id", c},
                       {"name", class_label(class_names, c)},
                       {"iou", nullable(report.scores.iou[c])},
                       {"acc", nullable(report.scores.acc[c])}});
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (int g = 0; g < report.pooled.num_classes; ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (int p = 0; p < report.pooled.num_classes; ++p) row.push_back(report.pooled.at(g, p));
    matrix.push_back(row);
  }
  nlohmann::json doc = {{"protocol", report.protocol == EvalProtocol::kPooled ? "pooled" : "per_view"},
                        {"include_background", report.include_background},
                        {"miou", report.scores.miou},
                        {"macc", report.scores.macc},
                        {"classes_used", report.scores.classes_used},
                        {"classes", classes},
                        {"confusion", matrix}};
  if (!report.per_view.empty()) {
    nlohmann::json views = nlohmann::json::array();
    for (const MiouMacc& m : report.per_view) views.push_back({{"miou", m.miou}, {"macc", m.macc}});
    doc["per_view"] = views;
  }
  return doc.dump(2);
}

std::string eval_report_table(const EvalReport& report, std::span<const std::string> class_names) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-20s %8s %8s\n", "id", "class", "IoU", "Acc");
  out << line;
  for (int c = 0; c < report.pooled.num_classes; ++c) {
    const double iou = report.scores.iou[c];
    const double acc = report.scores.acc[c];
    if (std::isnan(iou)) {
      std::snprintf(line, sizeof line, "%-4d %-20s %8s %8s\n", c, class_label(class_names, c).c_str(), "-", "-");
    } else {
      std::snprintf(line, sizeof line, "%-4d %-20s %8.4f %8.4f\n", c, class_label(class_names, c).c_str(), iou, acc);
    }
    out << line;
  }
  std::snprintf(line, sizeof line, "mIoU %.4f  mAcc %.4f  (%s, %d classes)\n", report.scores.miou,
                report.scores.macc, protocol_name(report).c_str(), report.scores.classes_used);
  out << line;
  return out.str();
}

}  // namespace gsseg
