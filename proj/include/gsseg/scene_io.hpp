#pragma once

#include "gsseg/types.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

namespace gsseg {

/// Raised for malformed or inconsistent input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads a binary little-endian 3DGS PLY and applies activations (sigmoid opacity,
/// exp scale, normalized quaternion).
///
/// When the file carries obj_code_* properties they are loaded and must agree with
/// `num_classes` if one is given. Otherwise `num_classes` is required and every code
/// starts at zero logits (uniform class distribution).
Scene load_scene(const std::filesystem::path& path, std::optional<int> num_classes = std::nullopt);

/// Writes the standard 3DGS layout followed by obj_code_0..K-1. Class names are kept
/// in header comments.
void save_scene(const Scene& scene, const std::filesystem::path& path);

struct ViewCamera {
  int id = 0;
  Camera camera;
};

/// Reads a JSON array of {id, width, height, fx, fy, cx, cy, world_to_camera[16] row-major}.
/// Result is ordered by id.
std::vector<ViewCamera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::vector<ViewCamera>& cameras, const std::filesystem::path& path);

/// Single-channel 8/16-bit PNG, pixel value = class ID. Every label must be < num_classes.
LabelMap load_label_map(const std::filesystem::path& path, int num_classes);
/// Writes 8-bit when all labels fit, 16-bit otherwise.
void save_label_map(const LabelMap& map, const std::filesystem::path& path);

/// Canonical mask filename for a view id, e.g. "0003.png".
std::string mask_filename(int view_id);

}  // namespace gsseg
