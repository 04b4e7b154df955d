#include "hybridnet/datakit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "hybridnet/errors.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

void validate_sample(const SceneSample& s, std::size_t num_classes, int ignore_label) {
  const std::size_t h = s.labels_gt.height;
  const std::size_t w = s.labels_gt.width;
  if (s.labels_gt.labels.size() != h * w) throw DataError(s.id + ": label map length mismatch");
  if (s.rgb.dims() != Shape{3, h, w}) {
    throw DataError(s.id + ": rgb " + shape_to_string(s.rgb.dims()) + " does not match labels " +
                    std::to_string(h) + "x" + std::to_string(w));
  }
  if (s.depth_gt.dims() != Shape{1, h, w}) {
    throw DataError(s.id + ": depth " + shape_to_string(s.depth_gt.dims()) + " does not match labels");
  }
  for (double v : s.rgb.data()) {
    if (v < 0.0 || v > 1.0) throw DataError(s.id + ": rgb value outside [0, 1]");
  }
  for (double v : s.depth_gt.data()) {
    if (v < 0.0) throw DataError(s.id + ": negative depth");
  }
  for (int l : s.labels_gt.labels) {
    if (l != ignore_label && (l < 0 || static_cast<std::size_t>(l) >= num_classes)) {
      throw DataError(s.id + ": label " + std::to_string(l) + " out of range");
    }
  }
}

void GenConfig::validate() const {
  if (h == 0 || w == 0) throw ConfigError("gen: image size must be positive");
  if (num_classes < 2) throw ConfigError("gen: num_classes must be >= 2");
  if (objects_min > objects_max) throw ConfigError("gen: objects_min > objects_max");
  if (!(near > 0.0) || !(near < far) || !std::isfinite(far)) throw ConfigError("gen: need 0 < near < far");
  if (ignore_label >= 0 && static_cast<std::size_t>(ignore_label) < num_classes) {
    throw ConfigError("gen: ignore_label collides with a class id");
  }
  if (2 * ignore_border >= std::min(h, w)) throw ConfigError("gen: ignore_border leaves no labelled pixels");
}

namespace {

std::array<double, 3> class_color(int label, std::size_t num_classes) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(num_classes);
  return {0.5 + 0.4 * std::cos(phase), 0.5 + 0.4 * std::cos(phase + 2.1), 0.5 + 0.4 * std::cos(phase + 4.2)};
}

double quantize_color(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }
double quantize_depth(double d) { return static_cast<double>(static_cast<float>(d)); }

}  // namespace

SceneSample synth_scene(const GenConfig& c, std::vector<SceneObject>* objects_out) {
  c.validate();
  Rng rng(c.seed);
  const std::size_t H = c.h;
  const std::size_t W = c.w;

  std::vector<double> depth(H * W);
  std::vector<int> labels(H * W, 0);
  for (std::size_t y = 0; y < H; ++y) {
    // Ground-plane style recession: far at the bottom row, 1.5 * far at the top.
    const double t = H > 1 ? static_cast<double>(H - 1 - y) / static_cast<double>(H - 1) : 0.0;
    const double d = quantize_depth(c.far * (1.0 + 0.5 * t));
    std::fill_n(depth.begin() + static_cast<long>(y * W), W, d);
  }

  const auto count = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(c.objects_min), static_cast<std::int64_t>(c.objects_max)));
  std::vector<SceneObject> objects;
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject o{};
    o.label = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(c.num_classes) - 1));
    const auto oh = static_cast<std::size_t>(rng.uniform_int(std::max<std::int64_t>(1, H / 8), std::max<std::int64_t>(1, H / 2)));
    const auto ow = static_cast<std::size_t>(rng.uniform_int(std::max<std::int64_t>(1, W / 8), std::max<std::int64_t>(1, W / 2)));
    o.y0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(H - oh)));
    o.x0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(W - ow)));
    o.y1 = o.y0 + oh;
    o.x1 = o.x0 + ow;
    o.depth = quantize_depth(rng.uniform(c.near, c.far));
    objects.push_back(o);
  }
  // Painter's order: farthest first.
  std::stable_sort(objects.begin(), objects.end(),
                   [](const SceneObject& a, const SceneObject& b) { return a.depth > b.depth; });
  for (const auto& o : objects) {
    for (std::size_t y = o.y0; y < o.y1; ++y) {
      for (std::size_t x = o.x0; x < o.x1; ++x) {
        depth[y * W + x] = o.depth;
        labels[y * W + x] = o.label;
      }
    }
  }

  std::vector<double> rgb(3 * H * W);
  for (std::size_t i = 0; i < H * W; ++i) {
    const auto base = class_color(labels[i], c.num_classes);
    const double shade = 0.35 + 0.65 * c.near / depth[i];
    for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch * H * W + i] = quantize_color(base[ch] * shade);
  }

  const std::size_t b = c.ignore_border;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      if (y < b || x < b || y >= H - b || x >= W - b) labels[y * W + x] = c.ignore_label;
    }
  }

  if (objects_out) *objects_out = objects;
  SceneSample s;
  s.id = "scene_" + std::to_string(c.seed);
  s.rgb = Tensor({3, H, W}, std::move(rgb));
  s.depth_gt = Tensor({1, H, W}, std::move(depth));
  s.labels_gt = LabelMap(H, W, std::move(labels));
  return s;
}

TileLayout make_tile_layout(std::size_t h, std::size_t w, std::size_t rows, std::size_t cols) {
  if (h == 0 || w == 0 || rows == 0 || cols == 0) throw ConfigError("tile layout: sizes and grid must be positive");
  if (rows > h || cols > w) throw ConfigError("tile layout: grid finer than the image");
  TileLayout t;
  t.height = h;
  t.width = w;
  t.rows = rows;
  t.cols = cols;
  t.tile_h = (h + rows - 1) / rows;
  t.tile_w = (w + cols - 1) / cols;
  // round(i * span / (n - 1)) in exact integer arithmetic, halves rounding up.
  auto origin = [](std::size_t i, std::size_t span, std::size_t n) -> std::size_t {
    if (n == 1) return 0;
    return (2 * i * span + (n - 1)) / (2 * (n - 1));
  };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      t.origins.emplace_back(origin(r, h - t.tile_h, rows), origin(c, w - t.tile_w, cols));
    }
  }
  return t;
}

std::vector<Tensor> extract_tiles(const Tensor& raster, const TileLayout& layout) {
  if (raster.rank() != 3 || raster.dim(1) != layout.height || raster.dim(2) != layout.width) {
    throw ShapeError("extract_tiles: raster " + shape_to_string(raster.dims()) + " does not match layout " +
                     std::to_string(layout.height) + "x" + std::to_string(layout.width));
  }
  const std::size_t ch = raster.dim(0);
  const std::size_t W = layout.width;
  std::vector<Tensor> crops;
  crops.reserve(layout.size());
  for (const auto& [oy, ox] : layout.origins) {
    Tensor crop({ch, layout.tile_h, layout.tile_w});
    auto dst = crop.mutable_data();
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t y = 0; y < layout.tile_h; ++y) {
        const double* src = raster.data().data() + (c * layout.height + oy + y) * W + ox;
        std::copy_n(src, layout.tile_w, dst.data() + (c * layout.tile_h + y) * layout.tile_w);
      }
    }
    crops.push_back(std::move(crop));
  }
  return crops;
}

std::vector<std::size_t> coverage_counts(const TileLayout& layout) {
  std::vector<std::size_t> counts(layout.height * layout.width, 0);
  for (const auto& [oy, ox] : layout.origins) {
    for (std::size_t y = oy; y < oy + layout.tile_h; ++y) {
      for (std::size_t x = ox; x < ox + layout.tile_w; ++x) ++counts[y * layout.width + x];
    }
  }
  return counts;
}

Tensor assemble_tiles(std::span<const Tensor> crops, const TileLayout& layout) {
  if (crops.size() != layout.size()) {
    throw ShapeError("assemble_tiles: " + std::to_string(crops.size()) + " crops for a layout of " +
                     std::to_string(layout.size()));
  }
  if (crops.empty()) throw ShapeError("assemble_tiles: empty layout");
  const std::size_t ch = crops[0].rank() == 3 ? crops[0].dim(0) : 0;
  for (const auto& crop : crops) {
    if (crop.dims() != Shape{ch, layout.tile_h, layout.tile_w}) {
      throw ShapeError("assemble_tiles: crop " + shape_to_string(crop.dims()) + " does not match tile size");
    }
  }
  const std::size_t H = layout.height;
  const std::size_t W = layout.width;
  std::vector<double> sums(ch * H * W, 0.0);
  for (std::size_t k = 0; k < crops.size(); ++k) {
    const auto [oy, ox] = layout.origins[k];
    const auto src = crops[k].data();
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t y = 0; y < layout.tile_h; ++y) {
        for (std::size_t x = 0; x < layout.tile_w; ++x) {
          sums[(c * H + oy + y) * W + ox + x] += src[(c * layout.tile_h + y) * layout.tile_w + x];
        }
      }
    }
  }
  const auto counts = coverage_counts(layout);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) {
      if (counts[i] == 0) throw ShapeError("assemble_tiles: layout leaves pixels uncovered");
      sums[c * H * W + i] /= static_cast<double>(counts[i]);
    }
  }
  return Tensor({ch, H, W}, std::move(sums));
}

Tensor disparity_to_depth(std::span<const std::uint16_t> raw, std::size_t h, std::size_t w, double baseline,
                          double focal) {
  if (!(baseline > 0.0) || !(focal > 0.0)) throw ConfigError("disparity_to_depth: baseline and focal must be > 0");
  if (raw.size() != h * w) throw ShapeError("disparity_to_depth: raster length does not match size");
  std::vector<double> depth(h * w, 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    // p = 1 encodes zero disparity (infinite depth); treat it as invalid too.
    if (raw[i] <= 1) continue;
    const double d = (static_cast<double>(raw[i]) - 1.0) / 256.0;
    depth[i] = focal * baseline / d;
  }
  return Tensor({1, h, w}, std::move(depth));
}

}  // namespace hybridnet
