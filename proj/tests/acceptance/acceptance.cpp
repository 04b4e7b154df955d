// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <fmt/core.h>

#include "../oracles.hpp"
#include "hybridnet/commands.hpp"
#include "hybridnet/gradcheck_suites.hpp"
#include "hybridnet/ops.hpp"
#include "hybridnet/parallel.hpp"
#include "hybridnet/report.hpp"

using namespace hybridnet;
namespace fs = std::filesystem;

namespace {

// Staged protocol settings (desk-scale overfit run).
constexpr std::size_t kScenes = 4;
constexpr std::size_t kPretrainIterations = 500;
constexpr std::size_t kHybridIterations = 2000;
constexpr double kDepthLr = 1e-3;
constexpr double kSegLr = 1e-2;
constexpr double kHybridLr = 2e-5;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Suite {
 public:
  explicit Suite(std::vector<std::string> only) : only_(std::move(only)) {}

  // `group` is the name --only selects by; it defaults to the criterion name.
  void run(const std::string& name, double budget_s, const std::function<Outcome()>& body,
           const std::string& group = "") {
    const std::string& key = group.empty() ? name : group;
    if (!only_.empty() && std::find(only_.begin(), only_.end(), key) == only_.end()) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= budget_s) {
      o.pass = false;
      o.detail += fmt::format("; over time budget {} s", budget_s);
    }
    all_pass_ = all_pass_ && o.pass;
    std::cout << fmt::format("{} {}: {} [{:.1f} s]", o.pass ? "PASS" : "FAIL", name, o.detail, secs) << std::endl;
  }
  bool all_pass() const { return all_pass_; }

 private:
  std::vector<std::string> only_;
  bool all_pass_ = true;
};

struct Cli {
  int code;
  std::string out, err;
};

Cli cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void require_ok(const Cli& r, const std::string& what) {
  if (r.code != kExitOk) throw std::runtime_error(what + " failed: " + r.err);
}

std::string slurp(const fs::path& p) {
  const Bytes b = read_file(p);
  return {b.begin(), b.end()};
}

ModelConfig small_model() {
  ModelConfig c;
  c.input_h = 16;
  c.input_w = 32;
  c.num_classes = 3;
  c.feature_channels = {4, 8};
  c.global_channels = {4, 4};
  c.global_fc_dim = 8;
  c.refine_channels = 4;
  c.aspp_rates = {1, 2};
  c.aspp_channels = 4;
  return c;
}

constexpr const char* kSmallConfig = R"({
  "model": {"input_h": 16, "input_w": 32, "num_classes": 3, "feature_channels": [4, 8],
            "global_channels": [4, 4], "global_fc_dim": 8, "refine_channels": 4,
            "aspp_rates": [1, 2], "aspp_channels": 4},
  "gen": {"h": 16, "w": 32, "num_classes": 3, "ignore_border": 1},
  "train": {"iterations": 4, "lr": 1e-4, "log_every": 1}
})";

Outcome report_rows(const fs::path& dir) {
  const auto data = dir / "rows_data";
  require_ok(cli({"synth", "--out", data.string(), "--count", "1"}), "synth");
  const auto report = dir / "rows.json";
  const Cli r = cli({"eval", "--data", data.string(), "--gt-as-prediction", "--report", report.string()});
  require_ok(r, "eval");
  const auto j = OrderedJson::parse(slurp(report));
  std::vector<std::string> seg, depth;
  for (const auto& row : j.at("segmentation")) seg.push_back(row.at("metric"));
  for (const auto& row : j.at("depth")) depth.push_back(row.at("metric"));
  const std::vector<std::string> want_seg{"G", "C", "IoUclass"};
  const std::vector<std::string> want_depth{"γ < 1.25", "γ < 1.25^2", "γ < 1.25^3", "ARD",
                                            "SRD",      "RMSE-linear", "RMSE-log",   "SIE"};
  bool ok = seg == want_seg && depth == want_depth;
  for (const auto& name : want_depth) ok = ok && r.out.find(name) != std::string::npos;
  for (const auto& name : want_seg) ok = ok && r.out.find(name) != std::string::npos;
  ok = ok && slurp(report.string() + ".txt") == r.out;
  return {ok, "JSON and text reports carry the segmentation rows G/C/IoUclass and the 8 depth rows in table "
              "order (full-scale table values need full Cityscapes training and are not reproduced here)"};
}

Outcome gradient_suite() {
  Outcome o{true, ""};
  for (GradScope scope : {GradScope::ops, GradScope::losses, GradScope::model}) {
    const auto targets = cmd_gradcheck(scope);
    double worst = 0;
    std::string worst_name;
    for (const auto& t : targets) {
      if (t.result.max_relative_error >= worst) {
        worst = t.result.max_relative_error;
        worst_name = t.name;
      }
      o.pass = o.pass && t.passed();
    }
    const double limit = scope == GradScope::model ? 1e-4 : 1e-6;
    o.pass = o.pass && worst < limit;
    o.detail += fmt::format("{}{} worst {:.3g} ({}) < {:g}", o.detail.empty() ? "" : "; ", grad_scope_name(scope),
                            worst, worst_name, limit);
  }
  return o;
}

Outcome metric_oracle() {
  std::size_t bad = 0, sie_bad = 0, mono_bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = oracle::random_case(seed, 24, 32, 6, kDefaultIgnoreLabel);
    const auto r = depth_metrics(c.pred, c.gt, c.valid);
    const auto o = oracle::depth(c.pred, c.gt, c.valid);
    const double got[] = {r.delta1, r.delta2, r.delta3, r.ard, r.srd, r.rmse_linear, r.rmse_log, r.sie};
    const double want[] = {o.delta1, o.delta2, o.delta3, o.ard, o.srd, o.rmse_linear, o.rmse_log, o.sie};
    for (std::size_t i = 0; i < 8; ++i) bad += oracle::close_rel(got[i], want[i], 1e-12) ? 0 : 1;

    const auto s = seg_metrics(confusion_accumulate(c.pred_labels, c.gt_labels, 6));
    const auto so = oracle::seg({c.pred_labels}, {c.gt_labels}, 6, kDefaultIgnoreLabel);
    bad += oracle::close_rel(s.global_acc, so.g, 1e-12) ? 0 : 1;
    bad += oracle::close_rel(s.class_acc, so.c, 1e-12) ? 0 : 1;
    bad += oracle::close_rel(s.mean_iou, so.iou, 1e-12) ? 0 : 1;

    for (double k : {0.1, 2.0, 10.0}) {
      Tensor scaled = c.pred;
      for (double& v : scaled.mutable_data()) v *= k;
      sie_bad += std::abs(depth_metrics(scaled, c.gt, c.valid).sie - r.sie) < 1e-9 ? 0 : 1;
    }
    mono_bad += (r.delta1 <= r.delta2 && r.delta2 <= r.delta3) ? 0 : 1;
  }
  return {bad == 0 && sie_bad == 0 && mono_bad == 0,
          fmt::format("100 cases: {} oracle mismatches (rel 1e-12), {} SIE scale violations, {} monotonicity "
                      "violations",
                      bad, sie_bad, mono_bad)};
}

Outcome loss_identities() {
  Rng rng(11);
  double worst_dn = 0;
  for (int i = 0; i < 20; ++i) {
    Tensor gt({1, 12, 20});
    for (double& v : gt.mutable_data()) v = rng.uniform(1.0, 50.0);
    const double a = rng.uniform(0.05, 20.0), b = rng.uniform(-30.0, 30.0);
    Tensor pred = gt;
    for (double& v : pred.mutable_data()) v = a * v + b;
    worst_dn = std::max(worst_dn, depth_normalized_loss(constant(pred), gt, Mask(12, 20)).value().item());
  }

  // Ignored pixels must receive exactly zero gradient.
  Tensor s({4, 6, 7});
  for (double& v : s.mutable_data()) v = 3.0 * rng.normal();
  LabelMap labels(6, 7);
  for (auto& l : labels.labels) l = rng.uniform() < 0.3 ? kDefaultIgnoreLabel : static_cast<int>(rng.uniform_int(0, 3));
  std::size_t nonzero = 0;
  for (Reduction red : {Reduction::mean, Reduction::sum}) {
    Parameter p("scores", s);
    backward(seg_cross_entropy(param(p), labels, kDefaultIgnoreLabel, red));
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
      if (labels.labels[i] != kDefaultIgnoreLabel) continue;
      for (std::size_t c = 0; c < 4; ++c) {
        const double g = p.grad[c * labels.labels.size() + i];
        nonzero += std::bit_cast<std::uint64_t>(g) == 0 ? 0 : 1;
      }
    }
  }

  const double l_h = combine_losses(0.5, 1.0, 2.0, 1000.0).l_h;
  return {worst_dn < 1e-9 && nonzero == 0 && l_h == 503.0,
          fmt::format("max L_DN(a*gt+b, gt) over 20 cases {:.3g} < 1e-9; {} non-zero ignored-pixel gradients; "
                      "l_h(0.5, 1, 2, alpha 1000) = {}",
                      worst_dn, nonzero, l_h)};
}

Outcome graph_separation() {
  const ModelConfig cfg;
  GenConfig g;
  g.seed = 5;
  const Tensor image = synth_scene(g).rgb;
  HybridNet base(cfg);
  const auto ref = base.predict(image);

  auto perturbed = [&](Block block) {
    HybridNet m(cfg);
    Rng rng(77);
    for (Parameter* p : m.block_parameters(block))
      for (double& v : p->value.mutable_data()) v += 0.05 * rng.normal();
    return m.predict(image);
  };
  const auto aspp = perturbed(Block::aspp);
  const auto global = perturbed(Block::global_depth);
  const auto refine = perturbed(Block::refine_depth);
  const auto features = perturbed(Block::features);
  const bool ok = aspp.depth == ref.depth && aspp.class_scores != ref.class_scores &&
                  global.class_scores == ref.class_scores && global.depth != ref.depth &&
                  refine.class_scores == ref.class_scores && refine.depth != ref.depth &&
                  features.depth != ref.depth && features.class_scores != ref.class_scores;
  return {ok, "ASPP perturbation leaves depth bitwise unchanged, global/refinement perturbations leave class "
              "scores bitwise unchanged, features perturbation changes both"};
}

Outcome tiling() {
  Rng rng(3);
  std::size_t failures = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 80));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 80));
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(h, 8))));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(w, 8))));
    const auto layout = make_tile_layout(h, w, rows, cols);
    Tensor raster({3, h, w});
    for (double& v : raster.mutable_data()) v = rng.normal();
    failures += assemble_tiles(extract_tiles(raster, layout), layout) == raster ? 0 : 1;
    std::vector<int> count(h * w, 0);
    for (auto [oy, ox] : layout.origins)
      for (std::size_t y = oy; y < oy + layout.tile_h; ++y)
        for (std::size_t x = ox; x < ox + layout.tile_w; ++x) ++count[y * w + x];
    for (int c : count) failures += c >= 1 ? 0 : 1;
  }

  const auto city = make_tile_layout(1024, 2048);
  std::vector<int> count(1024 * 2048, 0);
  for (auto [oy, ox] : city.origins)
    for (std::size_t y = oy; y < oy + city.tile_h; ++y)
      for (std::size_t x = ox; x < ox + city.tile_w; ++x) ++count[y * 2048 + x];
  const bool covered = std::all_of(count.begin(), count.end(), [](int c) { return c >= 1; });

  GenConfig g;
  g.h = 16;
  g.w = 32;
  g.num_classes = 3;
  g.ignore_border = 1;
  std::vector<SceneSample> data;
  for (std::uint64_t s = 0; s < 3; ++s) {
    g.seed = s;
    data.push_back(synth_scene(g));
  }
  HybridNet model(small_model());
  const bool same = evaluate(model, data, {std::nullopt}) == evaluate(model, data, {TileGrid{1, 1}});

  return {failures == 0 && city.size() == 18 && covered && same,
          fmt::format("300 random grids: {} round-trip/coverage failures; 1024x2048 3x6 gives {} tiles of {}x{}, "
                      "full coverage {}; 1x1 eval equals untiled bitwise: {}",
                      failures, city.size(), city.tile_h, city.tile_w, covered, same)};
}

Outcome staged_overfit(const fs::path& dir) {
  const auto data = (dir / "overfit_data").string();
  const auto ck = [&](const char* n) { return (dir / n).string(); };
  require_ok(cli({"synth", "--out", data, "--count", std::to_string(kScenes)}), "synth");
  const auto it = std::to_string(kPretrainIterations);
  const Cli d = cli({"train", "--data", data, "--stage", "depth", "--out", ck("depth.ckpt"), "--iterations", it,
                     "--lr", fmt::format("{}", kDepthLr), "--log-every", "100"});
  require_ok(d, "depth stage");
  const Cli s = cli({"train", "--data", data, "--stage", "seg", "--out", ck("seg.ckpt"), "--iterations", it,
                     "--lr", fmt::format("{}", kSegLr), "--log-every", "100"});
  require_ok(s, "seg stage");
  const Cli h = cli({"train", "--data", data, "--stage", "hybrid", "--init-depth", ck("depth.ckpt"), "--init-seg",
                     ck("seg.ckpt"), "--out", ck("hybrid.ckpt"), "--iterations", std::to_string(kHybridIterations),
                     "--alpha", "1000", "--lr", fmt::format("{}", kHybridLr), "--log-every", "10"});
  require_ok(h, "hybrid stage");
  const auto report_path = ck("overfit_report.json");
  require_ok(cli({"eval", "--ckpt", ck("hybrid.ckpt"), "--data", data, "--report", report_path}), "eval");
  const Report rep = parse_report(slurp(report_path));

  auto read_log = [](const std::string& path) {
    std::vector<LogEntry> log;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) log.push_back(parse_log_line(line));
    return log;
  };
  const auto depth_log = read_log(ck("depth.ckpt") + ".log");
  const auto hybrid_log = read_log(ck("hybrid.ckpt") + ".log");
  const double first = depth_log.front().loss.l_h;
  const double last = hybrid_log.back().loss.l_h;
  const double drop = first / last;

  const double g = rep.eval.seg.global_acc, ard = rep.eval.depth.ard;
  return {g >= 0.95 && ard <= 0.15 && drop >= 100.0,
          fmt::format("{} scenes, depth {} + seg {} + hybrid {} iterations: G {:.4f} (>= 0.95), ARD {:.4f} "
                      "(<= 0.15), l_h {:.4g} -> {:.4g} = {:.1f}x drop (>= 100x; hybrid stage alone {:.4g} -> {:.4g})",
                      kScenes, kPretrainIterations, kPretrainIterations, kHybridIterations, g, ard, first, last, drop,
                      hybrid_log.front().loss.l_h, last)};
}

// Mean l_h over the logged entries within +-50 iterations of `at`.
double smoothed_l_h(const std::vector<LogEntry>& log, std::size_t at) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& e : log) {
    if (e.iteration + 50 >= at && e.iteration <= at + 50) {
      sum += e.loss.l_h;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

int run_binary(const std::string& env, const std::string& args) {
  const int raw = std::system((env + " " + HYBRIDNET_CLI_PATH + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism(const fs::path& dir) {
  const auto cfg = (dir / "small.json").string();
  std::ofstream(cfg) << kSmallConfig;
  const auto data = (dir / "det_data").string();
  const auto data2 = (dir / "det_data2").string();
  require_ok(cli({"synth", "--config", cfg, "--out", data, "--count", "3"}), "synth");
  require_ok(cli({"synth", "--config", cfg, "--out", data2, "--count", "3"}), "synth");
  // Twice the model input size, so a 2x2 tile grid matches the model.
  const auto big = (dir / "det_big").string();
  require_ok(cli({"synth", "--config", cfg, "--out", big, "--count", "2", "--height", "32", "--width", "64"}),
             "synth");
  bool same_data = true;
  for (const auto& e : fs::directory_iterator(data)) {
    same_data = same_data && read_file(e.path()) == read_file(fs::path(data2) / e.path().filename());
  }

  auto pipeline = [&](const std::string& tag) {
    const auto p = [&](const std::string& n) { return (dir / (tag + n)).string(); };
    require_ok(cli({"train", "--config", cfg, "--data", data, "--stage", "depth", "--out", p(".d.ckpt")}), "train");
    require_ok(cli({"train", "--config", cfg, "--data", data, "--stage", "seg", "--out", p(".s.ckpt")}), "train");
    require_ok(cli({"train", "--config", cfg, "--data", data, "--stage", "hybrid", "--init-depth", p(".d.ckpt"),
                    "--init-seg", p(".s.ckpt"), "--out", p(".h.ckpt")}),
               "train");
    require_ok(cli({"eval", "--config", cfg, "--ckpt", p(".h.ckpt"), "--data", big, "--tiles", "2x2", "--report",
                    p(".json")}),
               "eval");
    require_ok(cli({"infer", "--config", cfg, "--ckpt", p(".h.ckpt"), "--image", data + "/scene_0.ppm",
                    "--out-depth", p(".dmap"), "--out-labels", p(".pgm"), "--tiles", "none"}),
               "infer");
    std::string all;
    for (const char* ext : {".d.ckpt", ".s.ckpt", ".h.ckpt", ".h.ckpt.log", ".json", ".json.txt", ".dmap", ".pgm"}) {
      all += slurp(p(ext));
    }
    return all;
  };

  const std::size_t saved_threads = thread_count();
  set_thread_count(1);
  const std::string a = pipeline("t1a");
  const std::string b = pipeline("t1b");
  set_thread_count(4);
  const std::string c = pipeline("t4");
  set_thread_count(saved_threads);

  // Round trips of every on-disk format.
  const auto ckpt = load_checkpoint(dir / "t1a.h.ckpt");
  bool round_trip = serialize_checkpoint(ckpt) == read_file(dir / "t1a.h.ckpt");
  for (const auto& s : read_dataset(data)) {
    round_trip = round_trip && decode_ppm(encode_ppm(s.rgb)) == s.rgb &&
                 decode_pgm(encode_pgm(s.labels_gt)) == s.labels_gt &&
                 decode_dmap(encode_dmap(s.depth_gt)) == s.depth_gt;
  }
  const Report rep = parse_report(slurp(dir / "t1a.json"));
  round_trip = round_trip && report_to_json(rep).dump(2) + "\n" == slurp(dir / "t1a.json");

  // The environment variable path through the real binary.
  const auto bin_ckpt = [&](const std::string& n) { return (dir / n).string(); };
  const std::string train_args =
      "train --config " + cfg + " --data " + data + " --stage hybrid --out ";
  const int e1 = run_binary("HYBRIDNET_THREADS=1", train_args + bin_ckpt("env1.ckpt"));
  const int e3 = run_binary("HYBRIDNET_THREADS=3", train_args + bin_ckpt("env3.ckpt"));
  const bool env_same = e1 == 0 && e3 == 0 && read_file(bin_ckpt("env1.ckpt")) == read_file(bin_ckpt("env3.ckpt"));

  return {same_data && a == b && a == c && round_trip && env_same,
          fmt::format("synth identical {}; repeated pipeline identical {}; 1 vs 4 threads identical {}; "
                      "HYBRIDNET_THREADS 1 vs 3 identical {}; checkpoint/PPM/PGM/DMAP/report round trips {}",
                      same_data, a == b, a == c, env_same, round_trip)};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::temp_directory_path() / "hybridnet_acceptance";
  // --only NAME (repeatable) restricts the run to the named criteria.
  std::vector<std::string> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--workdir") workdir = argv[i + 1];
    if (std::string(argv[i]) == "--only") only.push_back(argv[i + 1]);
  }
  fs::remove_all(workdir);
  fs::create_directories(workdir);

  Suite suite(only);
  suite.run("report-rows", 60, [&] { return report_rows(workdir); });
  suite.run("gradient-suite", 120, gradient_suite);
  suite.run("metric-oracle", 30, metric_oracle);
  suite.run("loss-identities", 10, loss_identities);
  suite.run("graph-separation", 30, graph_separation);
  suite.run("tiling", 30, tiling);
  suite.run("staged-overfit", 15 * 60, [&] { return staged_overfit(workdir); });
  suite.run("loss-descent", 1, [&] {
    std::vector<LogEntry> log;
    std::ifstream in(workdir / "hybrid.ckpt.log");
    for (std::string line; std::getline(in, line);) log.push_back(parse_log_line(line));
    const double early = smoothed_l_h(log, 10), late = smoothed_l_h(log, kHybridIterations);
    return Outcome{late < early, fmt::format("smoothed hybrid l_h at iteration {} = {:.4g} < {:.4g} at iteration 10",
                                             kHybridIterations, late, early)};
  }, "staged-overfit");
  suite.run("determinism", 300, [&] { return determinism(workdir); });
  std::cout << (suite.all_pass() ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return suite.all_pass() ? 0 : 1;
}
