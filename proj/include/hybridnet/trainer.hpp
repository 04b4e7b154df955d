#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hybridnet/datakit.hpp"
#include "hybridnet/losses.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/model.hpp"

namespace hybridnet {

// depth: L_DL + L_DN on features + global + refine.
// seg: L_S on features + ASPP.
// hybrid: alpha * L_S + L_DL + L_DN on everything.
enum class Stage { depth, seg, hybrid };

std::string_view stage_name(Stage stage);
Stage parse_stage(std::string_view name);
std::vector<Block> stage_blocks(Stage stage);

struct TrainConfig {
  double alpha = 1000.0;
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;
  Stage stage = Stage::hybrid;
  Reduction reduction = Reduction::mean;
  std::size_t log_every = 10;
  int ignore_label = kDefaultIgnoreLabel;
  double norm_epsilon = kDefaultNormEpsilon;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct SgdConfig {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// Momentum buffers keyed by parameter name.
struct SgdState {
  std::unordered_map<std::string, std::vector<double>> velocity;
};

/// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v;  grad <- 0.
/// Throws NumericError if an update produces a non-finite weight.
void sgd_step(std::span<Parameter* const> params, SgdState& state, const SgdConfig& config);

struct LogEntry {
  std::size_t iteration = 0;
  LossBreakdown loss;
};

// "iter <n> l_s <v> l_dl <v> l_dn <v> l_h <v>" with shortest round-trip values.
std::string format_log_line(const LogEntry& entry);
LogEntry parse_log_line(std::string_view line);

struct NamedTensor {
  std::string name;
  Tensor value;
  bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
  std::uint16_t format_version = 1;
  ModelConfig config;
  std::vector<NamedTensor> tensors;
  std::uint64_t iteration = 0;
  Stage stage = Stage::hybrid;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const HybridNet& model, std::uint64_t iteration, Stage stage);
// Throws CheckpointError unless every model parameter appears exactly once with matching dims.
HybridNet model_from_checkpoint(const Checkpoint& ckpt);
void load_parameters(HybridNet& model, const Checkpoint& ckpt);

/// Binary layout (little-endian):
///   "HYBN" | u16 version (=1) | u32 config length | config JSON (model, iteration, stage)
///   | u32 entry count | entries...
/// entry: u16 name length | UTF-8 name | u8 rank | rank x u32 dims | numel x f64
Bytes serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Global-depth and refinement tensors from `depth_ckpt`, features and ASPP
/// tensors from `seg_ckpt`; iteration reset to 0 and stage set to hybrid.
Checkpoint merge_checkpoints(const Checkpoint& depth_ckpt, const Checkpoint& seg_ckpt);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogEntry> log;
};

/// Runs `config.iterations` SGD steps (batch size 1) over `dataset` in a
/// seeded per-epoch shuffled order. Logs the full loss breakdown at iteration
/// 1, every `log_every` iterations and at the last iteration; only the stage's
/// blocks are updated.
TrainResult train_stage(HybridNet& model, std::span<const SceneSample> dataset, const TrainConfig& config);

struct TileGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;
  bool operator==(const TileGrid&) const = default;
};

std::string format_tile_grid(const std::optional<TileGrid>& grid);
// "RxC" or "none".
std::optional<TileGrid> parse_tile_grid(std::string_view text);

struct ScenePrediction {
  Tensor depth;   // 1 x H x W
  Tensor scores;  // K x H x W
  LabelMap labels;
};

/// Whole-image prediction, or per tile followed by averaging reassembly
/// (depth and scores) and argmax over the assembled scores.
ScenePrediction predict_scene(HybridNet& model, const Tensor& rgb, const std::optional<TileGrid>& tiles);

struct EvalReport {
  DepthMetricsReport depth;
  SegMetricsReport seg;
  ConfusionMatrix confusion;
  std::size_t images = 0;

  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  std::optional<TileGrid> tiles;
  int ignore_label = kDefaultIgnoreLabel;
};

EvalReport evaluate(HybridNet& model, std::span<const SceneSample> dataset, const EvalOptions& options = {});
EvalReport evaluate(const Checkpoint& ckpt, std::span<const SceneSample> dataset, const EvalOptions& options = {});
// Harness check: scores every sample's ground truth against itself.
EvalReport evaluate_ground_truth(std::span<const SceneSample> dataset, std::size_t num_classes,
                                 int ignore_label = kDefaultIgnoreLabel);

}  // namespace hybridnet
