#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hybridnet/config_json.hpp"
#include "hybridnet/datakit.hpp"
#include "hybridnet/gradcheck_suites.hpp"
#include "hybridnet/model.hpp"
#include "hybridnet/report.hpp"
#include "hybridnet/trainer.hpp"

namespace hybridnet {

struct RunPaths {
  std::string data;
  std::string checkpoint;
  std::string report;

  bool operator==(const RunPaths&) const = default;
};

/// One JSON document with sections "model", "train", "gen", "eval"
/// ({"tiles": "RxC" | "none", "split": name}) and "paths". Unknown keys are
/// rejected; absent keys keep their defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  GenConfig gen;
  std::optional<TileGrid> tiles;
  std::string split;
  RunPaths paths;

  bool operator==(const RunConfig&) const = default;
};

Json to_json(const RunConfig& c);
void from_json(const Json& j, RunConfig& out);
RunConfig load_run_config(const std::filesystem::path& path);

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

// Maps an exception thrown by a command to its exit code.
int exit_code_for(const std::exception& e);

// Writes `count` scenes with seeds gen.seed, gen.seed + 1, ... plus the manifest.
std::vector<SceneSample> cmd_synth(const std::filesystem::path& out_dir, std::size_t count, const GenConfig& gen);

struct TrainCommand {
  RunConfig config;
  std::filesystem::path data_dir;
  std::filesystem::path out_checkpoint;
  std::optional<std::filesystem::path> init_checkpoint;
  std::optional<std::filesystem::path> init_depth;
  std::optional<std::filesystem::path> init_seg;
  std::optional<std::filesystem::path> log_path;  // default: <out_checkpoint>.log
};

/// Model source, in order: init_depth + init_seg merged, init_checkpoint,
/// fresh init from config.model. Writes the checkpoint and the loss log.
TrainResult cmd_train(const TrainCommand& command);

struct EvalCommand {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::string split;  // subdirectory of data_dir; empty uses data_dir itself
  std::optional<TileGrid> tiles;
  std::optional<std::filesystem::path> report_path;
  bool ground_truth_as_prediction = false;
  std::size_t num_classes = ModelConfig{}.num_classes;  // used only with ground_truth_as_prediction
  int ignore_label = kDefaultIgnoreLabel;
};

// Writes the JSON report to report_path and its text table to report_path + ".txt".
Report cmd_eval(const EvalCommand& command);

struct InferCommand {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::filesystem::path out_depth;
  std::filesystem::path out_labels;
  std::optional<TileGrid> tiles;
};

ScenePrediction cmd_infer(const InferCommand& command);

std::vector<GradTarget> cmd_gradcheck(GradScope scope);

/// Parses argv and runs one subcommand (synth | train | eval | infer |
/// gradcheck | config-dump). Returns the process exit code; never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hybridnet
