#include "gsseg/scene_io.hpp"

#include "gsseg/image_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace gsseg {
namespace {

enum class ScalarType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

struct PlyProperty {
  std::string name;
  ScalarType type = ScalarType::kFloat32;
  std::size_t size = 0;
  std::size_t offset = 0;
};

struct PlyHeader {
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> properties;
  std::size_t stride = 0;
  std::map<int, std::string> class_names;
};

bool parse_type(const std::string& name, ScalarType& type, std::size_t& size) {
  static const std::unordered_map<std::string, std::pair<ScalarType, std::size_t>> types = {
      {"char", {ScalarType::kInt8, 1}},       {"int8", {ScalarType::kInt8, 1}},
      {"uchar", {ScalarType::kUInt8, 1}},     {"uint8", {ScalarType::kUInt8, 1}},
      {"short", {ScalarType::kInt16, 2}},     {"int16", {ScalarType::kInt16, 2}},
      {"ushort", {ScalarType::kUInt16, 2}},   {"uint16", {ScalarType::kUInt16, 2}},
      {"int", {ScalarType::kInt32, 4}},       {"int32", {ScalarType::kInt32, 4}},
      {"uint", {ScalarType::kUInt32, 4}},     {"uint32", {ScalarType::kUInt32, 4}},
      {"float", {ScalarType::kFloat32, 4}},   {"float32", {ScalarType::kFloat32, 4}},
      {"double", {ScalarType::kFloat64, 8}},  {"float64", {ScalarType::kFloat64, 8}}};
  auto it = types.find(name);
  if (it == types.end()) return false;
  type = it->second.first;
  size = it->second.second;
  return true;
}

PlyHeader parse_header(std::istream& in, const std::string& source) {
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError("malformed PLY header in '" + source + "': " + why);
  };

  std::string line;
  if (!std::getline(in, line) || line != "ply") throw fail("missing 'ply' magic");

  PlyHeader header;
  bool seen_format = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  while (true) {
    if (!std::getline(in, line)) throw fail("unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword == "end_header") break;
    if (keyword.empty() || keyword == "obj_info") continue;
    if (keyword == "comment") {
      std::string tag;
      int index = -1;
      tokens >> tag;
      if (tag == "class_name" && (tokens >> index) && index >= 0) {
        std::string name;
        std::getline(tokens >> std::ws, name);
        header.class_names[index] = name;
      }
      continue;
    }
    if (keyword == "format") {
      std::string format, version;
      tokens >> format >> version;
      if (format != "binary_little_endian") {
        throw fail("only binary_little_endian is supported, got '" + format + "'");
      }
      seen_format = true;
      continue;
    }
    if (keyword == "element") {
      std::string name;
      long long count = -1;
      tokens >> name >> count;
      if (!tokens || count < 0) throw fail("bad element line '" + line + "'");
      if (name != "vertex") throw fail("unsupported element '" + name + "'");
      if (seen_vertex) throw fail("duplicate vertex element");
      header.vertex_count = static_cast<std::size_t>(count);
      in_vertex = true;
      seen_vertex = true;
      continue;
    }
    if (keyword == "property") {
      if (!in_vertex) throw fail("property outside of an element");
      PlyProperty prop;
      std::string type_name;
      tokens >> type_name;
      if (type_name == "list") throw fail("list properties are not supported");
      tokens >> prop.name;
      if (!tokens || !parse_type(type_name, prop.type, prop.size)) {
        throw fail("bad property line '" + line + "'");
      }
      prop.offset = header.stride;
      header.stride += prop.size;
      header.properties.push_back(prop);
      continue;
    }
    throw fail("unknown keyword '" + keyword + "'");
  }
  if (!seen_format) throw fail("missing format line");
  if (!seen_vertex) throw fail("missing vertex element");
  return header;
}

template <typename T>
T load_raw(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double read_scalar(const char* p, ScalarType type) {
  switch (type) {
    case ScalarType::kInt8: return load_raw<std::int8_t>(p);
    case ScalarType::kUInt8: return load_raw<std::uint8_t>(p);
    case ScalarType::kInt16: return load_raw<std::int16_t>(p);
    case ScalarType::kUInt16: return load_raw<std::uint16_t>(p);
    case ScalarType::kInt32: return load_raw<std::int32_t>(p);
    case ScalarType::kUInt32: return load_raw<std::uint32_t>(p);
    case ScalarType::kFloat32: return load_raw<float>(p);
    case ScalarType::kFloat64: return load_raw<double>(p);
  }
  return 0.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  constexpr double kLimit = 30.0;
  if (p <= 0.0) return -kLimit;
  if (p >= 1.0) return kLimit;
  return std::clamp(std::log(p / (1.0 - p)), -kLimit, kLimit);
}

/// Collects `prefix + i` properties for i = 0, 1, ...; they must be contiguous.
std::vector<std::size_t> indexed_properties(const std::unordered_map<std::string, std::size_t>& by_name,
                                            const std::string& prefix, const std::string& source) {
  std::vector<std::size_t> found;
  std::size_t total = 0;
  for (const auto& [name, idx] : by_name) {
    if (name.rfind(prefix, 0) == 0) ++total;
  }
  for (std::size_t i = 0;; ++i) {
    auto it = by_name.find(prefix + std::to_string(i));
    if (it == by_name.end()) break;
    found.push_back(it->second);
  }
  if (found.size() != total) {
    throw FormatError("property count mismatch in '" + source + "': " + prefix +
                      "* properties are not numbered contiguously from 0");
  }
  return found;
}

}  // namespace

Scene load_scene(const std::filesystem::path& path, std::optional<int> num_classes) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open scene '" + source + "'");

  const PlyHeader header = parse_header(in, source);

  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < header.properties.size(); ++i) {
    if (!by_name.emplace(header.properties[i].name, i).second) {
      throw FormatError("duplicate property '" + header.properties[i].name + "' in '" + source + "'");
    }
  }
  auto require = [&](const std::string& name) -> const PlyProperty& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("property count mismatch in '" + source + "': missing '" + name + "'");
    }
    return header.properties[it->second];
  };

  const std::array<const PlyProperty*, 3> pos = {&require("x"), &require("y"), &require("z")};
  const std::array<const PlyProperty*, 3> dc = {&require("f_dc_0"), &require("f_dc_1"),
                                                &require("f_dc_2")};
  const PlyProperty& opacity = require("opacity");
  const std::array<const PlyProperty*, 3> scale = {&require("scale_0"), &require("scale_1"),
                                                   &require("scale_2")};
  const std::array<const PlyProperty*, 4> rot = {&require("rot_0"), &require("rot_1"),
                                                 &require("rot_2"), &require("rot_3")};
  const std::vector<std::size_t> rest = indexed_properties(by_name, "f_rest_", source);
  const std::vector<std::size_t> codes = indexed_properties(by_name, "obj_code_", source);

  int k = 0;
  if (!codes.empty()) {
    k = static_cast<int>(codes.size());
    if (num_classes && *num_classes != k) {
      throw FormatError("scene '" + source + "' carries " + std::to_string(k) +
                        " obj_code fields but K = " + std::to_string(*num_classes) + " was requested");
    }
  } else {
    if (!num_classes) {
      throw FormatError("scene '" + source + "' has no obj_code fields; the class count must be given");
    }
    k = *num_classes;
  }
  if (k < 2) throw FormatError("class count must be at least 2, got " + std::to_string(k));

  Scene scene = Scene::with_classes(k);
  for (const auto& [index, name] : header.class_names) {
    if (index < k) scene.class_names[index] = name;
  }

  std::vector<char> data(header.stride * header.vertex_count);
  in.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (static_cast<std::size_t>(in.gcount()) != data.size()) {
    throw FormatError("property count mismatch in '" + source + "': file holds fewer vertices than declared");
  }

  scene.gaussians.resize(header.vertex_count);
  for (std::size_t v = 0; v < header.vertex_count; ++v) {
    const char* rec = data.data() + v * header.stride;
    auto get = [&](const PlyProperty& p) { return read_scalar(rec + p.offset, p.type); };
    Gaussian& g = scene.gaussians[v];
    for (int a = 0; a < 3; ++a) {
      g.mean[a] = get(*pos[a]);
      g.color_dc[a] = get(*dc[a]);
      g.scale[a] = std::exp(get(*scale[a]));
    }
    g.opacity = sigmoid(get(opacity));
    Eigen::Quaterniond q(get(*rot[0]), get(*rot[1]), get(*rot[2]), get(*rot[3]));
    if (q.norm() == 0.0 || !q.coeffs().allFinite()) {
      throw FormatError("vertex " + std::to_string(v) + " in '" + source + "' has a degenerate rotation");
    }
    g.rotation = q.normalized();
    g.sh_rest.resize(rest.size());
    for (std::size_t r = 0; r < rest.size(); ++r) g.sh_rest[r] = get(header.properties[rest[r]]);
    g.object_code = Eigen::VectorXd::Zero(k);
    for (std::size_t c = 0; c < codes.size(); ++c) g.object_code[c] = get(header.properties[codes[c]]);
  }
  scene.validate();
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  scene.validate();
  const std::size_t rest_count = scene.empty() ? 0 : scene.gaussians.front().sh_rest.size();
  for (const Gaussian& g : scene.gaussians) {
    if (g.sh_rest.size() != rest_count) {
      throw std::invalid_argument("all Gaussians must carry the same number of f_rest coefficients");
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scene '" + path.string() + "'");

  out << "ply\nformat binary_little_endian 1.0\n";
  for (int i = 0; i < scene.num_classes; ++i) {
    out << "comment class_name " << i << " " << scene.class_names[i] << "\n";
  }
  out << "element vertex " << scene.size() << "\n";
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (std::size_t r = 0; r < rest_count; ++r) names.push_back("f_rest_" + std::to_string(r));
  for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    names.emplace_back(n);
  }
  for (int c = 0; c < scene.num_classes; ++c) names.push_back("obj_code_" + std::to_string(c));
  for (const std::string& n : names) out << "property float " << n << "\n";
  out << "end_header\n";

  std::vector<float> record;
  record.reserve(names.size());
  for (const Gaussian& g : scene.gaussians) {
    record.clear();
    for (int a = 0; a < 3; ++a) record.push_back(static_cast<float>(g.mean[a]));
    record.insert(record.end(), {0.0f, 0.0f, 0.0f});
    for (int a = 0; a < 3; ++a) record.push_back(static_cast<float>(g.color_dc[a]));
    for (double r : g.sh_rest) record.push_back(static_cast<float>(r));
    record.push_back(static_cast<float>(logit(g.opacity)));
    for (int a = 0; a < 3; ++a) record.push_back(static_cast<float>(std::log(g.scale[a])));
    const Eigen::Quaterniond q = g.rotation.normalized();
    record.insert(record.end(), {static_cast<float>(q.w()), static_cast<float>(q.x()),
                                 static_cast<float>(q.y()), static_cast<float>(q.z())});
    for (int c = 0; c < scene.num_classes; ++c) record.push_back(static_cast<float>(g.object_code[c]));
    out.write(reinterpret_cast<const char*>(record.data()),
              static_cast<std::streamsize>(record.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing scene '" + path.string() + "'");
}

std::vector<ViewCamera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cameras '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cameras '" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) throw FormatError("cameras '" + path.string() + "' must be a JSON array");

  std::vector<ViewCamera> cameras;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const nlohmann::json& rec = doc[i];
    const std::string where = "camera record " + std::to_string(i) + " in '" + path.string() + "'";
    for (const char* field : {"id", "width", "height", "fx", "fy", "cx", "cy", "world_to_camera"}) {
      if (!rec.contains(field)) throw FormatError(where + ": missing field '" + field + "'");
    }
    ViewCamera view;
    try {
      view.id = rec.at("id").get<int>();
      Camera& cam = view.camera;
      cam.width = rec.at("width").get<int>();
      cam.height = rec.at("height").get<int>();
      cam.fx = rec.at("fx").get<double>();
      cam.fy = rec.at("fy").get<double>();
      cam.cx = rec.at("cx").get<double>();
      cam.cy = rec.at("cy").get<double>();
      const auto m = rec.at("world_to_camera").get<std::vector<double>>();
      if (m.size() != 16) throw FormatError(where + ": world_to_camera needs 16 values");
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) cam.world_to_camera(r, c) = m[r * 4 + c];
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + ": " + e.what());
    }
    try {
      view.camera.validate();
    } catch (const std::invalid_argument& e) {
      throw FormatError(where + ": " + e.what());
    }
    cameras.push_back(view);
  }
  std::stable_sort(cameras.begin(), cameras.end(),
                   [](const ViewCamera& a, const ViewCamera& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < cameras.size(); ++i) {
    if (cameras[i].id == cameras[i - 1].id) {
      throw FormatError("duplicate camera id " + std::to_string(cameras[i].id));
    }
  }
  return cameras;
}

void save_cameras(const std::vector<ViewCamera>& cameras, const std::filesystem::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const ViewCamera& v : cameras) {
    std::vector<double> m(16);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m[r * 4 + c] = v.camera.world_to_camera(r, c);
    }
    doc.push_back({{"id", v.id},
                   {"width", v.camera.width},
                   {"height", v.camera.height},
                   {"fx", v.camera.fx},
                   {"fy", v.camera.fy},
                   {"cx", v.camera.cx},
                   {"cy", v.camera.cy},
                   {"world_to_camera", m}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write cameras '" + path.string() + "'");
  out << doc.dump(2) << "\n";
}

LabelMap load_label_map(const std::filesystem::path& path, int num_classes) {
  GrayImage image;
  try {
    image = read_png_gray(path);
  } catch (const std::runtime_error& e) {
    throw FormatError(e.what());
  }
  LabelMap map;
  map.width = image.width;
  map.height = image.height;
  map.labels = std::move(image.pixels);
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    if (map.labels[i] >= num_classes) {
      throw FormatError("label map '" + path.string() + "' has class " + std::to_string(map.labels[i]) +
                        " at pixel " + std::to_string(i) + ", but K = " + std::to_string(num_classes));
    }
  }
  return map;
}

void save_label_map(const LabelMap& map, const std::filesystem::path& path) {
  GrayImage image;
  image.width = map.width;
  image.height = map.height;
  image.pixels = map.labels;
  const bool fits_8bit = std::all_of(map.labels.begin(), map.labels.end(),
                                     [](std::uint16_t v) { return v <= 255; });
  image.bit_depth = fits_8bit ? 8 : 16;
  write_png_gray(image, path);
}

std::string mask_filename(int view_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d.png", view_id);
  return buf;
}

}  // namespace gsseg
