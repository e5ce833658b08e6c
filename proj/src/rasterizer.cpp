#include "gsseg/rasterizer.hpp"

#include "gsseg/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gsseg {
namespace {

struct TileGrid {
  int tile_size = 16;
  int tiles_x = 0;
  int tiles_y = 0;

  TileGrid(int width, int height, int size)
      : tile_size(size), tiles_x((width + size - 1) / size), tiles_y((height + size - 1) / size) {}

  std::size_t count() const { return static_cast<std::size_t>(tiles_x) * tiles_y; }
};

/// Splat indices (into the sorted list) overlapping each tile, in depth order.
std::vector<std::vector<int>> bin_splats(const SplatList& list, const TileGrid& grid,
                                         const RasterConfig& config) {
  std::vector<std::vector<int>> bins(grid.count());
  const Camera& cam = list.camera;
  for (std::size_t s = 0; s < list.splats.size(); ++s) {
    const Splat2D& sp = list.splats[s];
    if (!(sp.opacity >= config.alpha_min)) continue;
    // Axis-aligned box of the ellipse where opacity * exp(-m^2 / 2) >= alpha_min.
    const double m2 = 2.0 * std::log(sp.opacity / config.alpha_min);
    const double ex = std::sqrt(m2 * sp.cov2d(0, 0));
    const double ey = std::sqrt(m2 * sp.cov2d(1, 1));
    const double x0 = std::max(std::ceil(sp.center_px.x() - ex), 0.0);
    const double x1 = std::min(std::floor(sp.center_px.x() + ex), cam.width - 1.0);
    const double y0 = std::max(std::ceil(sp.center_px.y() - ey), 0.0);
    const double y1 = std::min(std::floor(sp.center_px.y() + ey), cam.height - 1.0);
    if (x1 < x0 || y1 < y0) continue;
    const int tx0 = static_cast<int>(x0) / grid.tile_size;
    const int tx1 = static_cast<int>(x1) / grid.tile_size;
    const int ty0 = static_cast<int>(y0) / grid.tile_size;
    const int ty1 = static_cast<int>(y1) / grid.tile_size;
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        bins[static_cast<std::size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<int>(s));
      }
    }
  }
  return bins;
}

struct TileRecord {
  std::vector<std::size_t> counts;  // per tile pixel, row-major within the tile
  std::vector<BlendEntry> entries;
};

template <typename Fn>
void for_tile_pixels(const TileGrid& grid, std::size_t tile, int width, int height, Fn&& fn) {
  const int tx = static_cast<int>(tile % grid.tiles_x);
  const int ty = static_cast<int>(tile / grid.tiles_x);
  const int x_end = std::min((tx + 1) * grid.tile_size, width);
  const int y_end = std::min((ty + 1) * grid.tile_size, height);
  for (int y = ty * grid.tile_size; y < y_end; ++y) {
    for (int x = tx * grid.tile_size; x < x_end; ++x) fn(x, y);
  }
}

void check_config(const RasterConfig& config) {
  if (config.tile_size <= 0) throw std::invalid_argument("tile size must be positive");
  if (!(config.alpha_max > 0.0 && config.alpha_max < 1.0)) {
    throw std::invalid_argument("alpha_max must lie in (0, 1)");
  }
}

}  // namespace

double alpha_at(const Splat2D& splat, const Vec2& pixel, double alpha_max) {
  const double dx = pixel.x() - splat.center_px.x();
  const double dy = pixel.y() - splat.center_px.y();
  const double power =
      -0.5 * (splat.conic(0, 0) * dx * dx + 2.0 * splat.conic(0, 1) * dx * dy + splat.conic(1, 1) * dy * dy);
  return std::min(alpha_max, splat.opacity * std::exp(power));
}

Eigen::MatrixXd code_values(const Scene& scene, CodeMode mode) {
  Eigen::MatrixXd values = scene.code_matrix();
  if (mode == CodeMode::kSoftmax) {
    for (Eigen::Index i = 0; i < values.cols(); ++i) values.col(i) = softmax(values.col(i));
  }
  return values;
}

Eigen::MatrixXd blend(const SplatList& splats, const Eigen::MatrixXd& values,
                      const Eigen::VectorXd& background, const RasterConfig& config, BlendRecord* record) {
  check_config(config);
  const Camera& cam = splats.camera;
  const int width = cam.width;
  const int height = cam.height;
  const Eigen::Index channels = values.rows();
  if (background.size() != channels) {
    throw std::invalid_argument("background vector length does not match value channels");
  }
  for (const Splat2D& s : splats.splats) {
    if (s.gaussian_index < 0 || s.gaussian_index >= values.cols()) {
      throw std::invalid_argument("splat refers to Gaussian " + std::to_string(s.gaussian_index) +
                                  " outside the value matrix");
    }
  }

  const TileGrid grid(width, height, config.tile_size);
  const std::vector<std::vector<int>> bins = bin_splats(splats, grid, config);
  Eigen::MatrixXd image(channels, static_cast<Eigen::Index>(cam.pixel_count()));
  std::vector<double> transmittance(cam.pixel_count(), 1.0);
  std::vector<TileRecord> tile_records(record != nullptr ? grid.count() : 0);

  parallel_for(grid.count(), [&](std::size_t tile, int) {
    const std::vector<int>& bin = bins[tile];
    TileRecord* tile_record = record != nullptr ? &tile_records[tile] : nullptr;
    for_tile_pixels(grid, tile, width, height, [&](int x, int y) {
      const std::size_t n = static_cast<std::size_t>(y) * width + x;
      const Vec2 pixel(x, y);
      double* out = image.col(static_cast<Eigen::Index>(n)).data();
      std::fill(out, out + channels, 0.0);
      double t = 1.0;
      std::size_t recorded = 0;
      for (int s : bin) {
        const Splat2D& sp = splats.splats[s];
        const double alpha = alpha_at(sp, pixel, config.alpha_max);
        if (alpha < config.alpha_min) continue;
        const double w = alpha * t;
        const double* v = values.col(sp.gaussian_index).data();
        for (Eigen::Index c = 0; c < channels; ++c) out[c] += w * v[c];
        if (tile_record != nullptr) {
          tile_record->entries.push_back({sp.gaussian_index, w});
          ++recorded;
        }
        t *= 1.0 - alpha;
        if (t < config.min_transmittance) break;
      }
      for (Eigen::Index c = 0; c < channels; ++c) out[c] += t * background[c];
      transmittance[n] = t;
      if (tile_record != nullptr) tile_record->counts.push_back(recorded);
    });
  });

  if (record != nullptr) {
    record->width = width;
    record->height = height;
    record->tile_size = config.tile_size;
    record->transmittance = std::move(transmittance);
    std::vector<std::size_t> counts(cam.pixel_count(), 0);
    for (std::size_t tile = 0; tile < grid.count(); ++tile) {
      std::size_t local = 0;
      for_tile_pixels(grid, tile, width, height, [&](int x, int y) {
        counts[static_cast<std::size_t>(y) * width + x] = tile_records[tile].counts[local++];
      });
    }
    record->offsets.assign(cam.pixel_count() + 1, 0);
    for (std::size_t n = 0; n < counts.size(); ++n) record->offsets[n + 1] = record->offsets[n] + counts[n];
    record->entries.resize(record->offsets.back());
    parallel_for(grid.count(), [&](std::size_t tile, int) {
      const TileRecord& tr = tile_records[tile];
      std::size_t src = 0;
      for_tile_pixels(grid, tile, width, height, [&](int x, int y) {
        const std::size_t n = static_cast<std::size_t>(y) * width + x;
        std::copy_n(tr.entries.begin() + static_cast<std::ptrdiff_t>(src), counts[n],
                    record->entries.begin() + static_cast<std::ptrdiff_t>(record->offsets[n]));
        src += counts[n];
      });
    });
  }
  return image;
}

Eigen::MatrixXd blend_from_record(const BlendRecord& record, const Eigen::MatrixXd& values,
                                  const Eigen::VectorXd& background) {
  const Eigen::Index channels = values.rows();
  if (background.size() != channels) {
    throw std::invalid_argument("background vector length does not match value channels");
  }
  const std::size_t pixels = record.pixel_count();
  Eigen::MatrixXd image(channels, static_cast<Eigen::Index>(pixels));
  constexpr std::size_t kChunk = 1024;
  parallel_for((pixels + kChunk - 1) / kChunk, [&](std::size_t chunk, int) {
    const std::size_t end = std::min(pixels, (chunk + 1) * kChunk);
    for (std::size_t n = chunk * kChunk; n < end; ++n) {
      double* out = image.col(static_cast<Eigen::Index>(n)).data();
      std::fill(out, out + channels, 0.0);
      for (const BlendEntry& e : record.pixel(n)) {
        if (e.gaussian_index >= values.cols()) {
          throw std::invalid_argument("blend record refers to a Gaussian outside the value matrix");
        }
        const double* v = values.col(e.gaussian_index).data();
        for (Eigen::Index c = 0; c < channels; ++c) out[c] += e.weight * v[c];
      }
      for (Eigen::Index c = 0; c < channels; ++c) out[c] += record.transmittance[n] * background[c];
    }
  });
  return image;
}

SemanticRender render_semantic(const Scene& scene, const SplatList& splats, CodeMode mode,
                               const RasterConfig& config) {
  SemanticRender result;
  Eigen::VectorXd background = Eigen::VectorXd::Zero(scene.num_classes);
  background[kBackgroundClass] = 1.0;
  result.image.width = splats.camera.width;
  result.image.height = splats.camera.height;
  result.image.mode = mode;
  result.image.data = blend(splats, code_values(scene, mode), background, config, &result.record);
  return result;
}

Eigen::MatrixXd render_color(const Scene& scene, const SplatList& splats, const RasterConfig& config) {
  Eigen::MatrixXd colors(3, static_cast<Eigen::Index>(scene.size()));
  for (std::size_t i = 0; i < scene.size(); ++i) {
    colors.col(static_cast<Eigen::Index>(i)) =
        (kShC0 * scene.gaussians[i].color_dc.array() + 0.5).max(0.0).matrix();
  }
  return blend(splats, colors, Eigen::Vector3d::Zero(), config);
}

Eigen::MatrixXd backward_codes(const BlendRecord& record, const Eigen::MatrixXd& grad_pixels,
                               const Scene& scene, CodeMode mode) {
  const Eigen::Index k = scene.num_classes;
  const std::size_t n_gauss = scene.size();
  if (grad_pixels.rows() != k || grad_pixels.cols() != static_cast<Eigen::Index>(record.pixel_count())) {
    throw std::invalid_argument("pixel gradient is " + std::to_string(grad_pixels.rows()) + "x" +
                                std::to_string(grad_pixels.cols()) + ", expected " + std::to_string(k) +
                                "x" + std::to_string(record.pixel_count()));
  }
  if (record.offsets.size() != record.pixel_count() + 1 || record.tile_size <= 0) {
    throw std::invalid_argument("malformed blend record");
  }

  // Tiles form a fixed partition: each tile sums its pixels in row-major order, then
  // tiles are reduced in index order. Thread scheduling never changes the sums.
  const TileGrid grid(record.width, record.height, record.tile_size);
  struct TilePartial {
    std::vector<int> gaussians;
    std::vector<double> grads;  // k per gaussian
  };
  std::vector<TilePartial> partials(grid.count());
  std::vector<std::vector<int>> slots(num_threads(), std::vector<int>(n_gauss, -1));

  parallel_for(grid.count(), [&](std::size_t tile, int worker) {
    TilePartial& part = partials[tile];
    std::vector<int>& slot = slots[worker];
    for_tile_pixels(grid, tile, record.width, record.height, [&](int x, int y) {
      const std::size_t n = static_cast<std::size_t>(y) * record.width + x;
      const double* gp = grad_pixels.col(static_cast<Eigen::Index>(n)).data();
      for (const BlendEntry& e : record.pixel(n)) {
        if (e.gaussian_index < 0 || static_cast<std::size_t>(e.gaussian_index) >= n_gauss) {
          throw std::invalid_argument("blend record refers to a Gaussian outside the scene");
        }
        int& s = slot[e.gaussian_index];
        if (s < 0) {
          s = static_cast<int>(part.gaussians.size());
          part.gaussians.push_back(e.gaussian_index);
          part.grads.resize(part.grads.size() + k, 0.0);
        }
        double* g = part.grads.data() + static_cast<std::size_t>(s) * k;
        for (Eigen::Index c = 0; c < k; ++c) g[c] += e.weight * gp[c];
      }
    });
    for (int gi : part.gaussians) slot[gi] = -1;
  });

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(n_gauss));
  for (const TilePartial& part : partials) {
    for (std::size_t j = 0; j < part.gaussians.size(); ++j) {
      grad.col(part.gaussians[j]) += Eigen::Map<const Eigen::VectorXd>(part.grads.data() + j * k, k);
    }
  }

  if (mode == CodeMode::kSoftmax) {
    // d softmax(o)/do = diag(s) - s s^T, applied to each column.
    for (std::size_t i = 0; i < n_gauss; ++i) {
      auto gv = grad.col(static_cast<Eigen::Index>(i));
      if (gv.isZero(0.0)) continue;
      const Eigen::VectorXd s = softmax(scene.gaussians[i].object_code);
      const double dot = s.dot(gv);
      gv = (s.array() * (gv.array() - dot)).matrix();
    }
  }
  return grad;
}

LabelMap argmax_labels(const SemanticImage& image) {
  LabelMap map(image.width, image.height);
  for (std::size_t n = 0; n < map.pixel_count(); ++n) {
    const auto col = image.data.col(static_cast<Eigen::Index>(n));
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < col.size(); ++c) {
      if (col[c] > col[best]) best = c;
    }
    map.labels[n] = static_cast<std::uint16_t>(best);
  }
  return map;
}

}  // namespace gsseg
