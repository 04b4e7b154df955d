#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "hybridnet/datakit.hpp"
#include "hybridnet/errors.hpp"
#include "hybridnet/random.hpp"

using namespace hybridnet;

namespace {

std::vector<std::size_t> ys(const TileLayout& t) {
  std::set<std::size_t> s;
  for (auto [y, x] : t.origins) s.insert(y);
  return {s.begin(), s.end()};
}

std::vector<std::size_t> xs(const TileLayout& t) {
  std::set<std::size_t> s;
  for (auto [y, x] : t.origins) s.insert(x);
  return {s.begin(), s.end()};
}

// Brute-force count map, independent of coverage_counts.
std::vector<std::size_t> paint_counts(const TileLayout& t) {
  std::vector<std::size_t> c(t.height * t.width, 0);
  for (auto [oy, ox] : t.origins)
    for (std::size_t y = oy; y < oy + t.tile_h; ++y)
      for (std::size_t x = ox; x < ox + t.tile_w; ++x) ++c[y * t.width + x];
  return c;
}

Tensor random_raster(Rng& rng, std::size_t c, std::size_t h, std::size_t w) {
  Tensor t({c, h, w});
  for (double& v : t.mutable_data()) v = rng.normal();
  return t;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hybridnet_datakit_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(TileLayout, CityscapesSizedGrid) {
  const auto t = make_tile_layout(1024, 2048, 3, 6);
  EXPECT_EQ(t.size(), 18u);
  EXPECT_EQ(t.tile_h, 342u);
  EXPECT_EQ(t.tile_w, 342u);
  EXPECT_EQ(ys(t), (std::vector<std::size_t>{0, 341, 682}));
  EXPECT_EQ(xs(t), (std::vector<std::size_t>{0, 341, 682, 1024, 1365, 1706}));
  const auto counts = coverage_counts(t);
  EXPECT_EQ(counts, paint_counts(t));
  EXPECT_EQ(*std::min_element(counts.begin(), counts.end()), 1u);
}

TEST(TileLayout, DivisibleGridHasNoOverlap) {
  const auto t = make_tile_layout(6, 12, 3, 6);
  EXPECT_EQ(t.size(), 18u);
  EXPECT_EQ(t.tile_h, 2u);
  EXPECT_EQ(t.tile_w, 2u);
  for (auto c : coverage_counts(t)) EXPECT_EQ(c, 1u);
}

TEST(TileLayout, SingleTile) {
  const auto t = make_tile_layout(7, 9, 1, 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t.origins[0], (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_EQ(t.tile_h, 7u);
  EXPECT_EQ(t.tile_w, 9u);
}

TEST(TileLayout, Errors) {
  EXPECT_THROW(make_tile_layout(0, 4, 1, 1), ConfigError);
  EXPECT_THROW(make_tile_layout(4, 4, 0, 1), ConfigError);
  EXPECT_THROW(make_tile_layout(2, 4, 3, 1), ConfigError);
  EXPECT_THROW(make_tile_layout(4, 2, 1, 3), ConfigError);
}

TEST(TileLayout, RandomGridsMatchFormulaCoverAndRoundTrip) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto h = static_cast<std::size_t>(rng.uniform_int(1, 60));
    const auto w = static_cast<std::size_t>(rng.uniform_int(1, 60));
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(h, 7))));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(std::min<std::size_t>(w, 7))));
    const auto t = make_tile_layout(h, w, rows, cols);

    const std::size_t th = (h + rows - 1) / rows, tw = (w + cols - 1) / cols;
    ASSERT_EQ(t.tile_h, th);
    ASSERT_EQ(t.tile_w, tw);
    ASSERT_EQ(t.size(), rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const auto [y, x] = t.origins[r * cols + c];
        const double ey = rows == 1 ? 0.0 : std::round(double(r) * double(h - th) / double(rows - 1));
        const double ex = cols == 1 ? 0.0 : std::round(double(c) * double(w - tw) / double(cols - 1));
        EXPECT_EQ(y, static_cast<std::size_t>(ey));
        EXPECT_EQ(x, static_cast<std::size_t>(ex));
        EXPECT_LE(y + th, h);
        EXPECT_LE(x + tw, w);
      }
    }
    const auto counts = paint_counts(t);
    EXPECT_EQ(coverage_counts(t), counts);
    EXPECT_GE(*std::min_element(counts.begin(), counts.end()), 1u);

    const Tensor raster = random_raster(rng, 2, h, w);
    const auto crops = extract_tiles(raster, t);
    EXPECT_EQ(crops[0].at(0, 0, 0), raster.at(0, 0, 0));
    EXPECT_EQ(assemble_tiles(crops, t), raster);
  }
}

TEST(Tiles, ConstantRasterGivesConstantCrops) {
  const auto t = make_tile_layout(10, 20, 3, 6);
  for (const auto& c : extract_tiles(Tensor::filled({1, 10, 20}, 4.5), t))
    for (double v : c.data()) EXPECT_EQ(v, 4.5);
}

TEST(Tiles, OverlapAverages) {
  // 1 x 3 image, two 1 x 2 tiles overlapping at the middle pixel.
  const auto t = make_tile_layout(1, 3, 1, 2);
  ASSERT_EQ(t.tile_w, 2u);
  const std::vector<Tensor> crops{Tensor({1, 1, 2}, {1, 1}), Tensor({1, 1, 2}, {3, 3})};
  EXPECT_EQ(assemble_tiles(crops, t), Tensor({1, 1, 3}, {1, 2, 3}));
}

TEST(Tiles, Mismatches) {
  const auto t = make_tile_layout(4, 4, 2, 2);
  EXPECT_THROW(extract_tiles(Tensor({1, 3, 4}), t), ShapeError);
  const auto crops = extract_tiles(Tensor({1, 4, 4}), t);
  EXPECT_THROW(assemble_tiles(std::span(crops).first(3), t), ShapeError);
  auto mixed = crops;
  mixed[1] = Tensor({2, 2, 2});
  EXPECT_THROW(assemble_tiles(mixed, t), ShapeError);
}

TEST(Disparity, Conversion) {
  const std::vector<std::uint16_t> raw{0, 257, 513, 129};
  const auto d = disparity_to_depth(raw, 2, 2, 0.22, 2262.0);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_NEAR(d[1], 497.64, 1e-9);
  EXPECT_NEAR(d[2], 497.64 / 2, 1e-9);
  EXPECT_NEAR(d[3], 497.64 * 2, 1e-9);
  EXPECT_THROW(disparity_to_depth(raw, 2, 2, 0.0, 1.0), ConfigError);
  EXPECT_THROW(disparity_to_depth(raw, 2, 2, 1.0, -1.0), ConfigError);
}

TEST(Generator, DeterministicAndSeedSensitive) {
  GenConfig c;
  c.seed = 42;
  EXPECT_EQ(synth_scene(c), synth_scene(c));
  GenConfig other = c;
  other.seed = 43;
  EXPECT_NE(synth_scene(c).depth_gt, synth_scene(other).depth_gt);
}

TEST(Generator, ConfigErrors) {
  GenConfig c;
  c.near = 10;
  c.far = 10;
  EXPECT_THROW(synth_scene(c), ConfigError);
  c = GenConfig{};
  c.num_classes = 1;
  EXPECT_THROW(synth_scene(c), ConfigError);
  c = GenConfig{};
  c.objects_min = 4;
  c.objects_max = 3;
  EXPECT_THROW(synth_scene(c), ConfigError);
}

TEST(Generator, OcclusionConsistencyOverThousandScenes) {
  GenConfig c;
  c.h = 24;
  c.w = 40;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    c.seed = seed;
    std::vector<SceneObject> objs;
    const auto s = synth_scene(c, &objs);
    validate_sample(s, c.num_classes, c.ignore_label);
    ASSERT_GE(objs.size(), c.objects_min);
    ASSERT_LE(objs.size(), c.objects_max);
    for (std::size_t y = 0; y < c.h; ++y) {
      for (std::size_t x = 0; x < c.w; ++x) {
        const SceneObject* front = nullptr;
        for (const auto& o : objs) {
          if (y >= o.y0 && y < o.y1 && x >= o.x0 && x < o.x1 && (!front || o.depth < front->depth)) front = &o;
        }
        const double d = s.depth_gt.at(0, y, x);
        const int l = s.labels_gt.at(y, x);
        const bool border = y < c.ignore_border || x < c.ignore_border || y >= c.h - c.ignore_border ||
                            x >= c.w - c.ignore_border;
        if (front) {
          ASSERT_EQ(d, front->depth) << seed;
          ASSERT_GE(d, static_cast<float>(c.near));
          ASSERT_LE(d, static_cast<float>(c.far));
          if (!border) ASSERT_EQ(l, front->label) << seed;
        } else {
          ASSERT_GE(d, c.far * (1 - 1e-6)) << seed;
          if (!border) ASSERT_EQ(l, 0) << seed;
        }
        if (border) ASSERT_EQ(l, c.ignore_label);
      }
    }
  }
}

TEST(Generator, BackgroundRecedesTowardsTop) {
  GenConfig c;
  c.objects_min = c.objects_max = 0;
  const auto s = synth_scene(c);
  for (std::size_t y = 1; y < c.h; ++y) EXPECT_GT(s.depth_gt.at(0, y - 1, 0), s.depth_gt.at(0, y, 0));
}

TEST(Formats, RoundTripsAreBitExact) {
  GenConfig c;
  c.seed = 3;
  const auto s = synth_scene(c);
  EXPECT_EQ(decode_ppm(encode_ppm(s.rgb)), s.rgb);
  EXPECT_EQ(decode_pgm(encode_pgm(s.labels_gt)), s.labels_gt);
  EXPECT_EQ(decode_dmap(encode_dmap(s.depth_gt)), s.depth_gt);
  EXPECT_EQ(encode_dmap(decode_dmap(encode_dmap(s.depth_gt))), encode_dmap(s.depth_gt));

  const auto dir = temp_dir("roundtrip");
  std::vector<SceneSample> samples;
  for (std::uint64_t k = 0; k < 3; ++k) {
    c.seed = k;
    samples.push_back(synth_scene(c));
  }
  write_dataset(dir, samples);
  EXPECT_EQ(read_manifest(dir), (std::vector<std::string>{"scene_0", "scene_1", "scene_2"}));
  EXPECT_EQ(read_dataset(dir), samples);
  std::filesystem::remove_all(dir);
}

TEST(Formats, ErrorsCarryOffsets) {
  const Bytes dmap = encode_dmap(Tensor::filled({1, 2, 2}, 1.0));
  Bytes bad = dmap;
  bad[0] = 'X';
  try {
    decode_dmap(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = dmap;
  bad[4] = 9;
  try {
    decode_dmap(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  try {
    decode_dmap(std::span(dmap).first(dmap.size() - 1));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), dmap.size() - 4);
  }
  Bytes trailing = dmap;
  trailing.push_back(0);
  EXPECT_THROW(decode_dmap(trailing), FormatError);

  const Bytes pgm = encode_pgm(LabelMap(2, 2, {0, 1, 2, 255}));
  EXPECT_THROW(decode_pgm(std::span(pgm).first(pgm.size() - 1)), FormatError);
  EXPECT_THROW(decode_ppm(pgm), FormatError);
  EXPECT_THROW(encode_pgm(LabelMap(1, 1, {300})), DataError);
}

TEST(Formats, MissingDatasetIsIoError) {
  EXPECT_THROW(read_dataset(temp_dir("missing")), IoError);
}

TEST(Samples, ValidationRejectsBadRasters) {
  GenConfig c;
  auto s = synth_scene(c);
  auto bad = s;
  bad.depth_gt.mutable_data()[0] = -1;
  EXPECT_THROW(validate_sample(bad, c.num_classes), DataError);
  bad = s;
  bad.labels_gt.labels[c.w * 5 + 5] = static_cast<int>(c.num_classes);
  EXPECT_THROW(validate_sample(bad, c.num_classes), DataError);
  bad = s;
  bad.rgb.mutable_data()[0] = 1.5;
  EXPECT_THROW(validate_sample(bad, c.num_classes), DataError);
}
