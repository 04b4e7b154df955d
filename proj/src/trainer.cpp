#include "hybridnet/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <sstream>

#include "hybridnet/errors.hpp"
#include "hybridnet/ops.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::depth:
      return "depth";
    case Stage::seg:
      return "seg";
    case Stage::hybrid:
      return "hybrid";
  }
  return "";
}

Stage parse_stage(std::string_view name) {
  if (name == "depth") return Stage::depth;
  if (name == "seg") return Stage::seg;
  if (name == "hybrid") return Stage::hybrid;
  throw ConfigError("unknown stage '" + std::string(name) + "' (expected depth, seg or hybrid)");
}

std::vector<Block> stage_blocks(Stage stage) {
  switch (stage) {
    case Stage::depth:
      return {Block::features, Block::global_depth, Block::refine_depth};
    case Stage::seg:
      return {Block::features, Block::aspp};
    case Stage::hybrid:
      return {Block::features, Block::global_depth, Block::refine_depth, Block::aspp};
  }
  return {};
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("train: alpha must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
  if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
  if (!(norm_epsilon > 0.0)) throw ConfigError("train: norm_epsilon must be > 0");
}

void sgd_step(std::span<Parameter* const> params, SgdState& state, const SgdConfig& config) {
  for (Parameter* p : params) {
    auto& v = state.velocity[p->name];
    if (v.size() != p->value.numel()) v.assign(p->value.numel(), 0.0);
    auto w = p->value.mutable_data();
    auto g = p->grad.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = config.momentum * v[i] + g[i] + config.weight_decay * w[i];
      w[i] -= config.lr * v[i];
      g[i] = 0.0;
    }
    require_finite(w, ("sgd_step on '" + p->name + "'").c_str());
  }
}

std::string format_log_line(const LogEntry& e) {
  return fmt::format("iter {} l_s {} l_dl {} l_dn {} l_h {}", e.iteration, e.loss.l_s, e.loss.l_dl, e.loss.l_dn,
                     e.loss.l_h);
}

LogEntry parse_log_line(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string tag;
  LogEntry e;
  auto expect = [&](const char* name) {
    if (!(in >> tag) || tag != name) throw FormatError("loss log: expected '" + std::string(name) + "'", 0);
  };
  auto number = [&]() {
    std::string tok;
    if (!(in >> tok)) throw FormatError("loss log: missing value", 0);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) throw FormatError("loss log: bad number '" + tok + "'", 0);
    return v;
  };
  expect("iter");
  if (!(in >> e.iteration)) throw FormatError("loss log: bad iteration", 0);
  expect("l_s");
  e.loss.l_s = number();
  expect("l_dl");
  e.loss.l_dl = number();
  expect("l_dn");
  e.loss.l_dn = number();
  expect("l_h");
  e.loss.l_h = number();
  return e;
}

namespace {

void require_model_sized(const SceneSample& s, const ModelConfig& mc, const char* context) {
  if (s.height() != mc.input_h || s.width() != mc.input_w) {
    throw ConfigError(std::string(context) + ": sample '" + s.id + "' is " + std::to_string(s.height()) + "x" +
                      std::to_string(s.width()) + " but the model expects " + std::to_string(mc.input_h) + "x" +
                      std::to_string(mc.input_w));
  }
}

// Fisher-Yates over [0, n) driven by the portable Rng.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

TrainResult train_stage(HybridNet& model, std::span<const SceneSample> dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const ModelConfig& mc = model.config();
  for (const auto& s : dataset) {
    require_model_sized(s, mc, "train");
    validate_sample(s, mc.num_classes, config.ignore_label);
  }

  std::vector<Parameter*> params;
  for (Block b : stage_blocks(config.stage)) {
    auto group = model.block_parameters(b);
    params.insert(params.end(), group.begin(), group.end());
  }
  zero_grads(std::span<Parameter>(model.parameters()));

  const SgdConfig sgd{config.lr, config.momentum, config.weight_decay};
  SgdState state;
  Rng rng(config.seed);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;

  TrainResult result;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    if (cursor == order.size()) {
      order = shuffled_indices(dataset.size(), rng);
      cursor = 0;
    }
    const SceneSample& sample = dataset[order[cursor++]];
    const bool log = it == 1 || it % config.log_every == 0 || it == config.iterations;

    Heads heads = Heads::both;
    if (!log && config.stage == Stage::depth) heads = Heads::depth;
    if (!log && config.stage == Stage::seg) heads = Heads::segmentation;
    const HybridVars out = model.hybrid_forward(constant(sample.rgb), heads);

    Var l_s, l_dl, l_dn;
    if (out.class_scores.defined()) {
      l_s = seg_cross_entropy(out.class_scores, sample.labels_gt, config.ignore_label, config.reduction);
    }
    if (out.depth.defined()) {
      const Mask valid = depth_validity(sample.depth_gt);
      l_dl = depth_linear_loss(out.depth, sample.depth_gt, valid);
      l_dn = depth_normalized_loss(out.depth, sample.depth_gt, valid, config.norm_epsilon);
    }

    Var objective;
    switch (config.stage) {
      case Stage::depth: {
        const Var terms[] = {l_dl, l_dn};
        const double weights[] = {1.0, 1.0};
        objective = weighted_sum(terms, weights);
        break;
      }
      case Stage::seg:
        objective = l_s;
        break;
      case Stage::hybrid:
        objective = hybrid_total(l_s, l_dl, l_dn, config.alpha);
        break;
    }

    if (log) {
      result.log.push_back({it, combine_losses(l_s.value().item(), l_dl.value().item(), l_dn.value().item(),
                                               config.alpha)});
    }
    backward(objective);
    sgd_step(params, state, sgd);
  }
  zero_grads(std::span<Parameter>(model.parameters()));
  result.checkpoint = make_checkpoint(model, config.iterations, config.stage);
  return result;
}

std::string format_tile_grid(const std::optional<TileGrid>& grid) {
  if (!grid) return "none";
  return std::to_string(grid->rows) + "x" + std::to_string(grid->cols);
}

std::optional<TileGrid> parse_tile_grid(std::string_view text) {
  if (text == "none" || text.empty()) return std::nullopt;
  const auto x = text.find('x');
  TileGrid g;
  auto parse = [&](std::string_view part, std::size_t& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size() || out == 0) {
      throw ConfigError("tile grid must look like RxC (e.g. 3x6) or 'none', got '" + std::string(text) + "'");
    }
  };
  parse(text.substr(0, x), g.rows);
  if (x == std::string_view::npos) parse("", g.cols);
  parse(text.substr(x + 1), g.cols);
  return g;
}

ScenePrediction predict_scene(HybridNet& model, const Tensor& rgb, const std::optional<TileGrid>& tiles) {
  const ModelConfig& mc = model.config();
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("predict_scene: expected 3xHxW image");
  ScenePrediction out;
  if (!tiles) {
    if (rgb.dim(1) != mc.input_h || rgb.dim(2) != mc.input_w) {
      throw ConfigError("image is " + std::to_string(rgb.dim(1)) + "x" + std::to_string(rgb.dim(2)) +
                        " but the model expects " + std::to_string(mc.input_h) + "x" + std::to_string(mc.input_w) +
                        "; pass a tile grid whose tiles match the model input");
    }
    auto pred = model.predict(rgb);
    out.depth = std::move(pred.depth);
    out.scores = std::move(pred.class_scores);
  } else {
    const TileLayout layout = make_tile_layout(rgb.dim(1), rgb.dim(2), tiles->rows, tiles->cols);
    if (layout.tile_h != mc.input_h || layout.tile_w != mc.input_w) {
      throw ConfigError("tile grid " + format_tile_grid(tiles) + " on a " + std::to_string(rgb.dim(1)) + "x" +
                        std::to_string(rgb.dim(2)) + " image gives " + std::to_string(layout.tile_h) + "x" +
                        std::to_string(layout.tile_w) + " tiles but the model expects " +
                        std::to_string(mc.input_h) + "x" + std::to_string(mc.input_w));
    }
    std::vector<Tensor> depth_tiles, score_tiles;
    for (const auto& crop : extract_tiles(rgb, layout)) {
      auto pred = model.predict(crop);
      depth_tiles.push_back(std::move(pred.depth));
      score_tiles.push_back(std::move(pred.class_scores));
    }
    out.depth = assemble_tiles(depth_tiles, layout);
    out.scores = assemble_tiles(score_tiles, layout);
  }
  out.labels = argmax_labels(out.scores);
  return out;
}

EvalReport evaluate(HybridNet& model, std::span<const SceneSample> dataset, const EvalOptions& options) {
  if (dataset.empty()) throw ConfigError("evaluate: dataset is empty");
  const std::size_t k = model.config().num_classes;
  DepthAccumulator depth;
  EvalReport r;
  r.confusion = ConfusionMatrix(k);
  for (const auto& s : dataset) {
    validate_sample(s, k, options.ignore_label);
    const auto pred = predict_scene(model, s.rgb, options.tiles);
    depth.add(pred.depth.data(), s.depth_gt.data(), depth_validity(s.depth_gt));
    confusion_accumulate(r.confusion, pred.labels, s.labels_gt, options.ignore_label);
    ++r.images;
  }
  r.depth = depth.report();
  r.seg = seg_metrics(r.confusion);
  return r;
}

EvalReport evaluate(const Checkpoint& ckpt, std::span<const SceneSample> dataset, const EvalOptions& options) {
  HybridNet model = model_from_checkpoint(ckpt);
  return evaluate(model, dataset, options);
}

EvalReport evaluate_ground_truth(std::span<const SceneSample> dataset, std::size_t num_classes, int ignore_label) {
  if (dataset.empty()) throw ConfigError("evaluate: dataset is empty");
  DepthAccumulator depth;
  EvalReport r;
  r.confusion = ConfusionMatrix(num_classes);
  for (const auto& s : dataset) {
    validate_sample(s, num_classes, ignore_label);
    depth.add(s.depth_gt.data(), s.depth_gt.data(), depth_validity(s.depth_gt));
    confusion_accumulate(r.confusion, s.labels_gt, s.labels_gt, ignore_label);
    ++r.images;
  }
  r.depth = depth.report();
  r.seg = seg_metrics(r.confusion);
  return r;
}

}  // namespace hybridnet
