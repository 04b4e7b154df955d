#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hybridnet/losses.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

/// One RGB / depth / label triplet. Depth 0 marks an invalid pixel.
struct SceneSample {
  std::string id;
  Tensor rgb;        // 3 x H x W, values in [0, 1]
  Tensor depth_gt;   // 1 x H x W, >= 0
  LabelMap labels_gt;

  std::size_t height() const { return labels_gt.height; }
  std::size_t width() const { return labels_gt.width; }
  bool operator==(const SceneSample&) const = default;
};

// Throws DataError when rasters disagree in size, depth is negative, rgb leaves
// [0, 1], or a label is neither in [0, num_classes) nor ignore_label.
void validate_sample(const SceneSample& sample, std::size_t num_classes, int ignore_label = kDefaultIgnoreLabel);

struct GenConfig {
  std::size_t h = 64;
  std::size_t w = 128;
  std::size_t num_classes = 5;
  std::size_t objects_min = 2;
  std::size_t objects_max = 5;
  double near = 2.0;
  double far = 10.0;
  std::size_t ignore_border = 2;
  int ignore_label = kDefaultIgnoreLabel;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

struct SceneObject {
  std::size_t y0, x0, y1, x1;  // half-open rectangle
  int label;
  double depth;
};

/// Procedural street-like scene: a receding background plane (class 0, always
/// behind every object) plus axis-aligned rectangles at constant depths drawn
/// from [near, far). Nearer rectangles occlude farther ones in rgb, depth and
/// labels alike; brightness falls off with depth. Colors are quantized to
/// k/255 and depths to float32 so the sample survives a file round trip
/// bit-exactly. `objects`, when given, receives the rectangles in paint order.
SceneSample synth_scene(const GenConfig& config, std::vector<SceneObject>* objects = nullptr);

struct TileLayout {
  std::size_t height = 0;  // image size the layout was built for
  std::size_t width = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t tile_h = 0;
  std::size_t tile_w = 0;
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // (y, x), row-major over the grid

  std::size_t size() const { return origins.size(); }
};

/// tile = ceil(extent / count); origin_i = round(i * (extent - tile) / (count - 1)).
TileLayout make_tile_layout(std::size_t h, std::size_t w, std::size_t rows = 3, std::size_t cols = 6);

// Crops a C x H x W raster into one C x tile_h x tile_w tensor per origin.
std::vector<Tensor> extract_tiles(const Tensor& raster, const TileLayout& layout);

// Inverse of extract_tiles: every output pixel is the mean of the tiles covering it.
Tensor assemble_tiles(std::span<const Tensor> crops, const TileLayout& layout);

// Number of tiles covering each pixel (H x W, row-major).
std::vector<std::size_t> coverage_counts(const TileLayout& layout);

/// 16-bit disparity encoding: p = 0 is invalid (depth 0), otherwise
/// d = (p - 1) / 256 and depth = focal * baseline / d.
Tensor disparity_to_depth(std::span<const std::uint16_t> raw, std::size_t h, std::size_t w, double baseline,
                          double focal);

// --- On-disk formats ---------------------------------------------------------

using Bytes = std::vector<std::uint8_t>;

Bytes encode_ppm(const Tensor& rgb);
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
Bytes encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(std::span<const std::uint8_t> bytes);
Bytes encode_dmap(const Tensor& depth);
Tensor decode_dmap(std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline constexpr const char* kManifestName = "manifest.txt";

// <dir>/manifest.txt plus <id>.ppm, <id>_labels.pgm, <id>_depth.dmap per sample.
void write_dataset(const std::filesystem::path& dir, std::span<const SceneSample> samples);
std::vector<std::string> read_manifest(const std::filesystem::path& dir);
SceneSample load_sample(const std::filesystem::path& dir, const std::string& id);
std::vector<SceneSample> read_dataset(const std::filesystem::path& dir);

}  // namespace hybridnet
