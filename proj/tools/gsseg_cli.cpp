// gsseg: synthetic fixtures, object-code training, refinement, rendering, extraction
// and evaluation for 3D Gaussian scenes.

#include "gsseg/eval.hpp"
#include "gsseg/image_io.hpp"
#include "gsseg/parallel.hpp"
#include "gsseg/projection.hpp"
#include "gsseg/rasterizer.hpp"
#include "gsseg/refine.hpp"
#include "gsseg/scene_io.hpp"
#include "gsseg/synthetic.hpp"
#include "gsseg/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gsseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Bad arguments or missing inputs; reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " path is required");
  if (!fs::is_regular_file(p)) throw UsageError(what + " '" + p.string() + "' does not exist");
}

void require_dir(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " path is required");
  if (!fs::is_directory(p)) throw UsageError(what + " directory '" + p.string() + "' does not exist");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

void write_labels_json(const std::vector<int>& labels, const fs::path& p) {
  write_text(p, nlohmann::json(labels).dump());
}

std::vector<int> read_labels_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_text(p)).get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("labels '" + p.string() + "': " + e.what());
  }
}

void write_label_preview(const LabelMap& map, const fs::path& p) {
  std::vector<std::uint8_t> rgb(map.labels.size() * 3);
  for (std::size_t n = 0; n < map.labels.size(); ++n) {
    const Vec3 c = class_color(map.labels[n]);
    for (int ch = 0; ch < 3; ++ch) rgb[3 * n + ch] = static_cast<std::uint8_t>(std::lround(255.0 * c[ch]));
  }
  write_png_rgb(map.width, map.height, rgb, p);
}

void write_color_png(const Eigen::MatrixXd& color, int width, int height, const fs::path& p) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(color.cols()) * 3);
  for (Eigen::Index n = 0; n < color.cols(); ++n) {
    for (int ch = 0; ch < 3; ++ch) {
      rgb[3 * n + ch] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(color(ch, n), 0.0, 1.0)));
    }
  }
  write_png_rgb(width, height, rgb, p);
}

CodeMode parse_mode(const std::string& s) { return s == "raw" ? CodeMode::kRaw : CodeMode::kSoftmax; }

std::vector<TrainView> load_views(const std::vector<ViewCamera>& cameras, const fs::path& masks_dir,
                                  int num_classes) {
  std::vector<TrainView> views;
  for (const ViewCamera& vc : cameras) {
    const fs::path mask = masks_dir / mask_filename(vc.id);
    require_file(mask, "mask for view " + std::to_string(vc.id));
    LabelMap map = load_label_map(mask, num_classes);
    if (map.width != vc.camera.width || map.height != vc.camera.height) {
      throw FormatError("mask '" + mask.string() + "' is " + std::to_string(map.width) + "x" +
                        std::to_string(map.height) + ", camera expects " + std::to_string(vc.camera.width) + "x" +
                        std::to_string(vc.camera.height));
    }
    views.push_back(make_train_view(vc.camera, map, num_classes));
  }
  return views;
}

// ---- synth ----

struct SynthOptions {
  fs::path spec;
  std::string demo = "two-blob";
  std::int64_t seed = -1;
  fs::path out;
};

int cmd_synth(const SynthOptions& o) {
  SynthSpec spec;
  if (!o.spec.empty()) {
    require_file(o.spec, "spec");
    try {
      spec = SynthSpec::from_json(read_text(o.spec));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  } else {
    spec = o.demo == "three-blob" ? SynthSpec::three_blob_demo() : SynthSpec::two_blob_demo();
  }
  if (o.seed >= 0) spec.seed = static_cast<std::uint64_t>(o.seed);

  const SynthScene s = generate(spec);
  fs::create_directories(o.out / "masks");
  save_scene(s.scene, o.out / "scene.ply");
  save_cameras(s.cameras, o.out / "cameras.json");
  for (std::size_t v = 0; v < s.cameras.size(); ++v) {
    save_label_map(s.label_maps[v], o.out / "masks" / mask_filename(s.cameras[v].id));
  }
  write_labels_json(s.planted, o.out / "planted_labels.json");
  write_text(o.out / "spec.json", spec.to_json());

  // Held-out poses halfway between training cameras, with their ground truth.
  SynthSpec novel = spec;
  novel.ring.angle_offset_deg += 180.0 / spec.ring.count;
  fs::create_directories(o.out / "novel_masks");
  std::vector<ViewCamera> novel_cams;
  for (int c = 0; c < novel.ring.count; ++c) {
    const double angle =
        2.0 * std::numbers::pi * c / novel.ring.count + novel.ring.angle_offset_deg * std::numbers::pi / 180.0;
    novel_cams.push_back({c, ring_camera(novel, angle)});
    save_label_map(render_label_map(s.scene, s.planted, novel_cams.back().camera),
                   o.out / "novel_masks" / mask_filename(c));
  }
  save_cameras(novel_cams, o.out / "novel_cameras.json");

  std::cout << "wrote " << s.scene.size() << " Gaussians, " << s.cameras.size() << " views, K = "
            << s.scene.num_classes << " to " << o.out.string() << "\n";
  return kExitOk;
}

// ---- train ----

struct TrainOptions {
  fs::path scene;
  fs::path cameras;
  fs::path masks;
  fs::path out;
  int num_classes = 0;
  int iterations = 300;
  double lr = 0.05;
  std::string optimizer = "adam";
  std::string mode = "softmax";
  int batch = 1;
  bool quiet = false;
};

int cmd_train(const TrainOptions& o) {
  require_file(o.scene, "scene");
  require_file(o.cameras, "cameras");
  require_dir(o.masks, "masks");
  if (o.iterations < 0) throw UsageError("--iterations must be non-negative");

  Scene scene = load_scene(o.scene, o.num_classes > 0 ? std::optional<int>(o.num_classes) : std::nullopt);
  const std::vector<ViewCamera> cameras = load_cameras(o.cameras);
  const std::vector<TrainView> views = load_views(cameras, o.masks, scene.num_classes);

  TrainConfig cfg;
  cfg.iterations = o.iterations;
  cfg.learning_rate = o.lr;
  cfg.optimizer = o.optimizer == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  cfg.mode = parse_mode(o.mode);
  cfg.batch = o.batch;
  try {
    cfg.validate(views.size());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  ProgressSink progress;
  if (!o.quiet) {
    progress = [&](int it, double loss) {
      if (it % 50 == 0 || it + 1 == cfg.iterations) std::cout << "iter " << it << "  loss " << loss << "\n";
    };
  }
  const TrainReport report = train(scene, views, cfg, progress);
  fs::create_directories(o.out);
  save_scene(scene, o.out / "scene.ply");
  write_text(o.out / "report.json", train_report_json(report));
  std::cout << "trained " << report.iterations << " iterations in " << report.seconds << " s, loss "
            << report.initial_loss << " -> " << report.final_loss << "\n";
  return kExitOk;
}

// ---- refine ----

struct RefineOptions {
  fs::path scene;
  fs::path out;
  RefineConfig config;
  bool no_knn = false;
  bool no_filter = false;
};

int cmd_refine(const RefineOptions& o) {
  require_file(o.scene, "scene");
  try {
    o.config.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Scene scene = load_scene(o.scene);
  if (!o.no_knn) {
    if (static_cast<std::size_t>(o.config.k) >= scene.size()) {
      throw UsageError("--k " + std::to_string(o.config.k) + " must be smaller than the Gaussian count " +
                       std::to_string(scene.size()));
    }
    const std::size_t ambiguous = select_ambiguous(scene, o.config.beta).size();
    scene = knn_refine(scene, o.config);
    std::cout << "knn refinement: " << ambiguous << " ambiguous Gaussians re-estimated\n";
  }
  Segmentation seg = segment(scene);
  if (!o.no_filter) {
    std::vector<FilterResult> details;
    seg = filter_all_classes(scene, seg, o.config, &details);
    std::size_t removed = 0;
    for (const FilterResult& r : details) removed += r.removed.size();
    std::cout << "statistical filter: " << removed << " Gaussians moved to background\n";
  }
  fs::create_directories(o.out);
  save_scene(scene, o.out / "scene.ply");
  save_segmentation(scene, seg, o.out / "segmentation.json");
  save_scene(colorize(scene, seg), o.out / "scene_colorized.ply");
  std::vector<int> counts(scene.num_classes, 0);
  for (int c : seg.class_of) ++counts[c];
  for (int c = 0; c < scene.num_classes; ++c) {
    std::cout << "  class " << c << " (" << scene.class_names[c] << "): " << counts[c] << "\n";
  }
  return kExitOk;
}

// ---- render ----

struct RenderOptions {
  fs::path scene;
  fs::path cameras;
  fs::path segmentation;
  fs::path out;
  std::string mode = "softmax";
  bool color = false;
};

Segmentation load_checked_segmentation(const fs::path& p, const Scene& scene) {
  require_file(p, "segmentation");
  Segmentation seg = load_segmentation(p);
  if (seg.size() != scene.size()) {
    throw FormatError("segmentation has " + std::to_string(seg.size()) + " entries, scene has " +
                      std::to_string(scene.size()));
  }
  for (int c : seg.class_of) {
    if (c < 0 || c >= scene.num_classes) throw FormatError("segmentation class " + std::to_string(c) + " outside [0, K)");
  }
  return seg;
}

int cmd_render(const RenderOptions& o) {
  require_file(o.scene, "scene");
  require_file(o.cameras, "cameras");
  const Scene scene = load_scene(o.scene);
  const std::vector<ViewCamera> cameras = load_cameras(o.cameras);
  std::optional<Scene> hard;
  if (!o.segmentation.empty()) hard = labeled_scene(scene, load_checked_segmentation(o.segmentation, scene));

  fs::create_directories(o.out);
  for (const ViewCamera& vc : cameras) {
    LabelMap labels;
    if (hard) {
      labels = argmax_labels(render_semantic(*hard, project(*hard, vc.camera), CodeMode::kRaw).image);
    } else {
      labels = argmax_labels(render_semantic(scene, project(scene, vc.camera), parse_mode(o.mode)).image);
    }
    const std::string name = mask_filename(vc.id);
    save_label_map(labels, o.out / name);
    write_label_preview(labels, o.out / ("vis_" + name));
    if (o.color) {
      write_color_png(render_color(scene, project(scene, vc.camera)), vc.camera.width, vc.camera.height,
                      o.out / ("rgb_" + name));
    }
  }
  std::cout << "rendered " << cameras.size() << " views to " << o.out.string() << "\n";
  return kExitOk;
}

// ---- extract ----

struct ExtractOptions {
  fs::path scene;
  fs::path segmentation;
  std::vector<int> classes;
  fs::path out;
};

int cmd_extract(const ExtractOptions& o) {
  require_file(o.scene, "scene");
  if (o.classes.empty()) throw UsageError("--classes needs at least one class id");
  const Scene scene = load_scene(o.scene);
  for (int c : o.classes) {
    if (c < 0 || c >= scene.num_classes) {
      throw UsageError("unknown class id " + std::to_string(c) + " (scene has K = " +
                       std::to_string(scene.num_classes) + ")");
    }
  }
  const Segmentation seg = o.segmentation.empty() ? segment(scene) : load_checked_segmentation(o.segmentation, scene);
  const auto t0 = std::chrono::steady_clock::now();
  const Scene sub = extract_objects(scene, seg, o.classes);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(o.out);
  save_scene(sub, o.out / "extracted.ply");
  write_labels_json(select_classes(seg, o.classes), o.out / "extracted_indices.json");
  std::cout << "extracted " << sub.size() << " of " << scene.size() << " Gaussians in " << ms << " ms\n";
  return kExitOk;
}

// ---- eval ----

struct EvalOptions {
  fs::path gt;
  fs::path pred;
  int num_classes = 0;
  std::string protocol = "pooled";
  bool no_background = false;
  fs::path planted;
  fs::path segmentation;
  fs::path out;
};

std::vector<std::string> label_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".png" && name.rfind("vis_", 0) != 0 &&
        name.rfind("rgb_", 0) != 0) {
      names.push_back(name);
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_eval(const EvalOptions& o) {
  require_dir(o.gt, "ground-truth");
  require_dir(o.pred, "prediction");
  const std::vector<std::string> names = label_files(o.gt);
  if (names.empty()) throw UsageError("no label PNGs in '" + o.gt.string() + "'");

  // Read at full 16-bit range first so K can be inferred.
  std::vector<LabelMap> gt;
  std::vector<LabelMap> pred;
  int max_label = 0;
  for (const std::string& name : names) {
    require_file(o.pred / name, "prediction");
    gt.push_back(load_label_map(o.gt / name, 65536));
    pred.push_back(load_label_map(o.pred / name, 65536));
    for (const LabelMap* m : {&gt.back(), &pred.back()}) {
      for (std::uint16_t l : m->labels) max_label = std::max<int>(max_label, l);
    }
  }
  const int k = o.num_classes > 0 ? o.num_classes : max_label + 1;
  if (max_label >= k) throw FormatError("label " + std::to_string(max_label) + " is outside [0, K)");

  const EvalReport report = evaluate(gt, pred, k, o.protocol == "per-view" ? EvalProtocol::kPerView
                                                                            : EvalProtocol::kPooled,
                                     !o.no_background);
  const std::vector<std::string> class_names = default_class_names(k);
  std::cout << eval_report_table(report, class_names);

  nlohmann::json doc = nlohmann::json::parse(eval_report_json(report, class_names));
  doc["views"] = names;
  if (!o.planted.empty() || !o.segmentation.empty()) {
    if (o.planted.empty() || o.segmentation.empty()) throw UsageError("--planted and --segmentation go together");
    require_file(o.planted, "planted labels");
    require_file(o.segmentation, "segmentation");
    const double acc = gaussian_accuracy(load_segmentation(o.segmentation), read_labels_json(o.planted));
    doc["gaussian_accuracy"] = acc;
    std::cout << "Gaussian accuracy " << acc << "\n";
  }
  if (!o.out.empty()) {
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    write_text(o.out, doc.dump(2));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D Gaussian object segmentation from posed 2D masks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; [section] names match subcommands");
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic blob fixture");
  synth_cmd->add_option("--spec", synth.spec, "JSON fixture spec");
  synth_cmd->add_option("--demo", synth.demo, "Built-in spec when --spec is absent")
      ->check(CLI::IsMember({"two-blob", "three-blob"}))
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Override the spec seed");
  synth_cmd->add_option("-o,--out", synth.out, "Output directory")->required();

  TrainOptions tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Optimize object codes against posed masks");
  train_cmd->add_option("--scene", tr.scene, "Input PLY")->required();
  train_cmd->add_option("--cameras", tr.cameras, "cameras.json")->required();
  train_cmd->add_option("--masks", tr.masks, "Directory of NNNN.png label maps")->required();
  train_cmd->add_option("-o,--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--num-classes", tr.num_classes, "K for scenes without object codes");
  train_cmd->add_option("--iterations", tr.iterations, "Optimizer steps")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer, "Code optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  train_cmd->add_option("--mode", tr.mode, "Blend softmax probabilities or raw logits")
      ->check(CLI::IsMember({"softmax", "raw"}))
      ->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "Views per step")->capture_default_str();
  train_cmd->add_flag("-q,--quiet", tr.quiet, "No per-iteration output");

  RefineOptions rf;
  CLI::App* refine_cmd = app.add_subcommand("refine", "KNN refinement and statistical filtering");
  refine_cmd->add_option("--scene", rf.scene, "Trained PLY")->required();
  refine_cmd->add_option("-o,--out", rf.out, "Output directory")->required();
  refine_cmd->add_option("--beta", rf.config.beta, "Ambiguity threshold on max class probability")
      ->capture_default_str();
  refine_cmd->add_option("--k", rf.config.k, "Neighbors averaged per ambiguous Gaussian")
      ->capture_default_str();
  refine_cmd->add_option("--filter-k", rf.config.filter_k, "Neighbors for the mean-distance statistic")
      ->capture_default_str();
  refine_cmd->add_option("--std-mult", rf.config.filter_std_mult, "Removal threshold in standard deviations")
      ->capture_default_str();
  refine_cmd->add_flag("--no-knn", rf.no_knn, "Skip KNN refinement");
  refine_cmd->add_flag("--no-filter", rf.no_filter, "Skip statistical filtering");

  RenderOptions rd;
  CLI::App* render_cmd = app.add_subcommand("render", "Render label maps for a set of cameras");
  render_cmd->add_option("--scene", rd.scene, "PLY with object codes")->required();
  render_cmd->add_option("--cameras", rd.cameras, "cameras.json")->required();
  render_cmd->add_option("--segmentation", rd.segmentation,
                         "Render hard labels from segmentation.json; filtered Gaussians are dropped");
  render_cmd->add_option("-o,--out", rd.out, "Output directory")->required();
  render_cmd->add_option("--mode", rd.mode, "Blend softmax probabilities or raw logits")
      ->check(CLI::IsMember({"softmax", "raw"}))
      ->capture_default_str();
  render_cmd->add_flag("--color", rd.color, "Also write RGB renders");

  ExtractOptions ex;
  CLI::App* extract_cmd = app.add_subcommand("extract", "Write the Gaussians of chosen classes");
  extract_cmd->add_option("--scene", ex.scene, "PLY with object codes")->required();
  extract_cmd->add_option("--segmentation", ex.segmentation, "segmentation.json (default: argmax of codes)");
  extract_cmd->add_option("--classes", ex.classes, "Class ids, e.g. --classes 1,3")->required()->delimiter(',');
  extract_cmd->add_option("-o,--out", ex.out, "Output directory")->required();

  EvalOptions ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "mIoU / mAcc of predicted label maps");
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth label directory")->required();
  eval_cmd->add_option("--pred", ev.pred, "Predicted label directory")->required();
  eval_cmd->add_option("--num-classes", ev.num_classes, "K (default: largest label + 1)");
  eval_cmd->add_option("--protocol", ev.protocol, "Pool pixels over all views or average per view")
      ->check(CLI::IsMember({"pooled", "per-view"}))
      ->capture_default_str();
  eval_cmd->add_flag("--no-background", ev.no_background, "Leave class 0 out of the means");
  eval_cmd->add_option("--planted", ev.planted, "planted_labels.json for Gaussian accuracy");
  eval_cmd->add_option("--segmentation", ev.segmentation, "segmentation.json for Gaussian accuracy");
  eval_cmd->add_option("-o,--out", ev.out, "Metrics JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (threads > 0) set_num_threads(threads);
  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*train_cmd) return cmd_train(tr);
    if (*refine_cmd) return cmd_refine(rf);
    if (*render_cmd) return cmd_render(rd);
    if (*extract_cmd) return cmd_extract(ex);
    if (*eval_cmd) return cmd_eval(ev);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
