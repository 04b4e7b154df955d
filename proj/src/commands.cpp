#include "hybridnet/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "hybridnet/errors.hpp"

namespace hybridnet {

namespace fs = std::filesystem;

Json to_json(const RunConfig& c) {
  return Json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"gen", to_json(c.gen)},
              {"eval", {{"tiles", format_tile_grid(c.tiles)}, {"split", c.split}}},
              {"paths", {{"data", c.paths.data}, {"checkpoint", c.paths.checkpoint}, {"report", c.paths.report}}}};
}

void from_json(const Json& j, RunConfig& c) {
  reject_unknown_keys(j, {"model", "train", "gen", "eval", "paths"}, "config");
  if (j.contains("model")) from_json(j["model"], c.model);
  if (j.contains("train")) from_json(j["train"], c.train);
  if (j.contains("gen")) from_json(j["gen"], c.gen);
  const auto text = [](const Json& section, const char* key, std::string& out, const char* where) {
    if (!section.contains(key)) return;
    if (!section[key].is_string()) throw ConfigError(std::string(where) + "." + key + ": expected a string");
    out = section[key].get<std::string>();
  };
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    reject_unknown_keys(e, {"tiles", "split"}, "eval");
    std::string tiles = format_tile_grid(c.tiles);
    text(e, "tiles", tiles, "eval");
    c.tiles = parse_tile_grid(tiles);
    text(e, "split", c.split, "eval");
  }
  if (j.contains("paths")) {
    const Json& p = j["paths"];
    reject_unknown_keys(p, {"data", "checkpoint", "report"}, "paths");
    text(p, "data", c.paths.data, "paths");
    text(p, "checkpoint", c.paths.checkpoint, "paths");
    text(p, "report", c.paths.report, "paths");
  }
}

RunConfig load_run_config(const fs::path& path) {
  const Bytes bytes = read_file(path);
  Json j;
  try {
    j = Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SpecError*>(&e)) return kExitUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const CheckpointError*>(&e) || dynamic_cast<const DataError*>(&e)) {
    return kExitIo;
  }
  return kExitFailure;
}

namespace {

fs::path split_dir(const fs::path& data_dir, const std::string& split) {
  if (data_dir.empty()) throw ConfigError("no data directory given");
  const fs::path dir = split.empty() ? data_dir : data_dir / split;
  if (!fs::is_directory(dir)) throw ConfigError("data directory " + dir.string() + " does not exist");
  return dir;
}

void write_text(const fs::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

std::vector<SceneSample> cmd_synth(const fs::path& out_dir, std::size_t count, const GenConfig& gen) {
  gen.validate();
  std::vector<SceneSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    GenConfig g = gen;
    g.seed = gen.seed + i;
    samples.push_back(synth_scene(g));
  }
  write_dataset(out_dir, samples);
  return samples;
}

TrainResult cmd_train(const TrainCommand& c) {
  const std::vector<SceneSample> dataset = read_dataset(split_dir(c.data_dir, c.config.split));
  if (c.out_checkpoint.empty()) throw ConfigError("train: no output checkpoint path given");
  if (c.init_depth.has_value() != c.init_seg.has_value()) {
    throw ConfigError("train: --init-depth and --init-seg must be given together");
  }
  if (c.init_depth && c.init_checkpoint) throw ConfigError("train: --init cannot be combined with --init-depth/--init-seg");

  HybridNet model = [&] {
    if (c.init_depth) {
      return model_from_checkpoint(merge_checkpoints(load_checkpoint(*c.init_depth), load_checkpoint(*c.init_seg)));
    }
    if (c.init_checkpoint) return model_from_checkpoint(load_checkpoint(*c.init_checkpoint));
    c.config.model.validate();
    return HybridNet(c.config.model);
  }();

  TrainResult result = train_stage(model, dataset, c.config.train);
  save_checkpoint(result.checkpoint, c.out_checkpoint);
  std::string log;
  for (const auto& e : result.log) log += format_log_line(e) + "\n";
  write_text(c.log_path ? *c.log_path : fs::path(c.out_checkpoint.string() + ".log"), log);
  return result;
}

Report cmd_eval(const EvalCommand& c) {
  const std::vector<SceneSample> dataset = read_dataset(split_dir(c.data_dir, c.split));
  Report report;
  report.split = c.split.empty() ? c.data_dir.filename().string() : c.split;
  report.tiles = c.tiles;
  EvalOptions options;
  options.tiles = c.tiles;
  options.ignore_label = c.ignore_label;
  if (c.ground_truth_as_prediction) {
    report.eval = evaluate_ground_truth(dataset, c.num_classes, c.ignore_label);
  } else {
    report.eval = evaluate(load_checkpoint(c.checkpoint), dataset, options);
  }
  if (c.report_path) {
    write_text(*c.report_path, report_to_json(report).dump(2) + "\n");
    write_text(c.report_path->string() + ".txt", format_report_table(report));
  }
  return report;
}

ScenePrediction cmd_infer(const InferCommand& c) {
  HybridNet model = model_from_checkpoint(load_checkpoint(c.checkpoint));
  const Tensor rgb = decode_ppm(read_file(c.image));
  ScenePrediction pred = predict_scene(model, rgb, c.tiles);
  write_file(c.out_depth, encode_dmap(pred.depth));
  write_file(c.out_labels, encode_pgm(pred.labels));
  return pred;
}

std::vector<GradTarget> cmd_gradcheck(GradScope scope) { return run_gradcheck_suite(scope); }

namespace {

struct CliState {
  std::string config_path;
  RunConfig config;

  // Flag values; unset ones leave the config file untouched.
  std::optional<std::string> data, split, tiles, stage, out, report, ckpt, init, init_depth, init_seg, log, reduction;
  std::optional<double> alpha, lr, momentum, weight_decay;
  std::optional<std::size_t> iterations, log_every, count, height, width, num_classes;
  std::optional<std::uint64_t> seed;
  std::string image, out_depth, out_labels, scope = "all";
  bool gt_as_prediction = false;

  void load() {
    if (!config_path.empty()) config = load_run_config(config_path);
    if (data) config.paths.data = *data;
    if (split) config.split = *split;
    if (tiles) config.tiles = parse_tile_grid(*tiles);
    if (stage) config.train.stage = parse_stage(*stage);
    if (ckpt) config.paths.checkpoint = *ckpt;
    if (report) config.paths.report = *report;
    if (alpha) config.train.alpha = *alpha;
    if (lr) config.train.lr = *lr;
    if (momentum) config.train.momentum = *momentum;
    if (weight_decay) config.train.weight_decay = *weight_decay;
    if (iterations) config.train.iterations = *iterations;
    if (log_every) config.train.log_every = *log_every;
    if (reduction) from_json(Json{{"reduction", *reduction}}, config.train);
    if (seed) {
      config.train.seed = *seed;
      config.gen.seed = *seed;
    }
    if (height) config.gen.h = *height;
    if (width) config.gen.w = *width;
    if (num_classes) config.gen.num_classes = *num_classes;
  }
};

std::optional<fs::path> opt_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return fs::path(*s);
}

void print_targets(std::ostream& out, GradScope scope, const std::vector<GradTarget>& targets) {
  for (const auto& t : targets) {
    out << (t.passed() ? "PASS " : "FAIL ") << grad_scope_name(scope) << "/" << t.name
        << "  worst relative error " << t.result.max_relative_error << " (threshold " << t.threshold << ", "
        << t.result.elements_checked << " elements";
    if (t.result.kinks_skipped > 0) out << ", " << t.result.kinks_skipped << " kink crossings skipped";
    if (!t.passed()) out << ", worst at " << t.result.worst_parameter << "[" << t.result.worst_index << "]";
    out << ")\n";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint depth estimation and semantic segmentation on a toy multi-task network", "hybridnet"};
  app.require_subcommand(1);
  CliState s;

  const auto add_config = [&s](CLI::App* sub) {
    sub->add_option("--config", s.config_path, "JSON run configuration");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_config(synth);
  synth->add_option("--out", s.out, "Output directory")->required();
  synth->add_option("--count", s.count, "Number of scenes")->required();
  synth->add_option("--seed", s.seed, "Seed of the first scene");
  synth->add_option("--height", s.height, "Scene height");
  synth->add_option("--width", s.width, "Scene width");
  synth->add_option("--num-classes", s.num_classes, "Number of classes");

  auto* train = app.add_subcommand("train", "Run one training stage");
  add_config(train);
  train->add_option("--data", s.data, "Dataset directory");
  train->add_option("--split", s.split, "Dataset subdirectory");
  train->add_option("--stage", s.stage, "depth | seg | hybrid");
  train->add_option("--out", s.out, "Output checkpoint")->required();
  train->add_option("--init", s.init, "Start from this checkpoint");
  train->add_option("--init-depth", s.init_depth, "Depth-stage checkpoint to merge");
  train->add_option("--init-seg", s.init_seg, "Segmentation-stage checkpoint to merge");
  train->add_option("--log", s.log, "Loss log path (default <out>.log)");
  train->add_option("--iterations", s.iterations, "SGD iterations");
  train->add_option("--lr", s.lr, "Learning rate");
  train->add_option("--momentum", s.momentum, "Momentum");
  train->add_option("--weight-decay", s.weight_decay, "Weight decay");
  train->add_option("--alpha", s.alpha, "Segmentation loss weight");
  train->add_option("--reduction", s.reduction, "Cross-entropy reduction: mean | sum");
  train->add_option("--log-every", s.log_every, "Logging interval");
  train->add_option("--seed", s.seed, "Sample-order seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_config(eval);
  eval->add_option("--ckpt", s.ckpt, "Checkpoint");
  eval->add_option("--data", s.data, "Dataset directory");
  eval->add_option("--split", s.split, "Dataset subdirectory");
  eval->add_option("--tiles", s.tiles, "Tile grid RxC or none");
  eval->add_option("--report", s.report, "JSON report path (text table at <report>.txt)");
  eval->add_flag("--gt-as-prediction", s.gt_as_prediction, "Score ground truth against itself");
  eval->add_option("--num-classes", s.num_classes, "Class count for --gt-as-prediction");

  auto* infer = app.add_subcommand("infer", "Predict depth and labels for one image");
  add_config(infer);
  infer->add_option("--ckpt", s.ckpt, "Checkpoint");
  infer->add_option("--image", s.image, "Input PPM")->required();
  infer->add_option("--out-depth", s.out_depth, "Output DMAP")->required();
  infer->add_option("--out-labels", s.out_labels, "Output PGM")->required();
  infer->add_option("--tiles", s.tiles, "Tile grid RxC or none");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--scope", s.scope, "ops | losses | model | all");

  auto* dump = app.add_subcommand("config-dump", "Print the effective configuration");
  add_config(dump);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    s.load();
    const RunConfig& cfg = s.config;
    if (synth->parsed()) {
      const auto samples = cmd_synth(*s.out, *s.count, cfg.gen);
      out << "wrote " << samples.size() << " scenes to " << *s.out << "\n";
    } else if (train->parsed()) {
      TrainCommand c;
      c.config = cfg;
      c.data_dir = cfg.paths.data;
      c.out_checkpoint = *s.out;
      c.init_checkpoint = opt_path(s.init);
      c.init_depth = opt_path(s.init_depth);
      c.init_seg = opt_path(s.init_seg);
      c.log_path = opt_path(s.log);
      const TrainResult r = cmd_train(c);
      for (const auto& e : r.log) out << format_log_line(e) << "\n";
      out << "wrote " << *s.out << "\n";
    } else if (eval->parsed()) {
      EvalCommand c;
      c.checkpoint = cfg.paths.checkpoint;
      c.data_dir = cfg.paths.data;
      c.split = cfg.split;
      c.tiles = cfg.tiles;
      if (!cfg.paths.report.empty()) c.report_path = cfg.paths.report;
      c.ground_truth_as_prediction = s.gt_as_prediction;
      c.num_classes = s.num_classes.value_or(cfg.model.num_classes);
      c.ignore_label = cfg.train.ignore_label;
      if (!c.ground_truth_as_prediction && c.checkpoint.empty()) throw ConfigError("eval: no checkpoint given");
      out << format_report_table(cmd_eval(c));
    } else if (infer->parsed()) {
      if (cfg.paths.checkpoint.empty()) throw ConfigError("infer: no checkpoint given");
      const auto pred = cmd_infer({cfg.paths.checkpoint, s.image, s.out_depth, s.out_labels, cfg.tiles});
      out << "wrote " << s.out_depth << " and " << s.out_labels << " (" << pred.labels.height << "x"
          << pred.labels.width << ")\n";
    } else if (gradcheck->parsed()) {
      std::vector<GradScope> scopes;
      if (s.scope == "all") {
        scopes = {GradScope::ops, GradScope::losses, GradScope::model};
      } else {
        scopes = {parse_grad_scope(s.scope)};
      }
      bool ok = true;
      for (GradScope scope : scopes) {
        const auto targets = cmd_gradcheck(scope);
        print_targets(out, scope, targets);
        ok = ok && std::all_of(targets.begin(), targets.end(), [](const GradTarget& t) { return t.passed(); });
      }
      return ok ? kExitOk : kExitFailure;
    } else if (dump->parsed()) {
      out << to_json(cfg).dump(2) << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace hybridnet
