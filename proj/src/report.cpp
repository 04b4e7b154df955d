#include "hybridnet/report.hpp"

#include <fmt/format.h>

#include "hybridnet/errors.hpp"

namespace hybridnet {
namespace {

std::array<double, 8> depth_values(const DepthMetricsReport& d) {
  return {d.delta1, d.delta2, d.delta3, d.ard, d.srd, d.rmse_linear, d.rmse_log, d.sie};
}

std::array<double, 3> seg_values(const SegMetricsReport& s) { return {s.global_acc, s.class_acc, s.mean_iou}; }

template <std::size_t N>
OrderedJson rows(const std::array<std::string_view, N>& names, const std::array<double, N>& values) {
  OrderedJson out = OrderedJson::array();
  for (std::size_t i = 0; i < N; ++i) {
    require_finite(std::span<const double>(&values[i], 1), "report");
    out.push_back({{"metric", std::string(names[i])}, {"value", values[i]}});
  }
  return out;
}

template <std::size_t N>
std::array<double, N> read_rows(const OrderedJson& j, const char* block, const std::array<std::string_view, N>& names) {
  if (!j.contains(block) || !j[block].is_array() || j[block].size() != N) {
    throw FormatError(fmt::format("report: '{}' must list exactly {} rows", block, N), 0);
  }
  std::array<double, N> values{};
  for (std::size_t i = 0; i < N; ++i) {
    const auto& row = j[block][i];
    if (row.value("metric", std::string()) != names[i]) {
      throw FormatError(fmt::format("report: row {} of '{}' must be '{}'", i, block, names[i]), 0);
    }
    values[i] = row.at("value").get<double>();
  }
  return values;
}

}  // namespace

OrderedJson report_to_json(const Report& r) {
  const auto& e = r.eval;
  OrderedJson per_class = OrderedJson::array();
  for (const auto& iou : e.seg.per_class_iou) {
    per_class.push_back(iou ? OrderedJson(*iou) : OrderedJson(nullptr));
  }
  OrderedJson confusion = OrderedJson::array();
  for (std::size_t g = 0; g < e.confusion.num_classes(); ++g) {
    OrderedJson row = OrderedJson::array();
    for (std::size_t p = 0; p < e.confusion.num_classes(); ++p) row.push_back(e.confusion.at(g, p));
    confusion.push_back(std::move(row));
  }
  return OrderedJson{{"split", r.split},
                     {"tiles", format_tile_grid(r.tiles)},
                     {"images", e.images},
                     {"segmentation", rows(kSegRowNames, seg_values(e.seg))},
                     {"depth", rows(kDepthRowNames, depth_values(e.depth))},
                     {"depth_pixels", e.depth.pixels},
                     {"per_class_iou", per_class},
                     {"confusion", confusion}};
}

Report report_from_json(const OrderedJson& j) {
  try {
    Report r;
    r.split = j.at("split").get<std::string>();
    r.tiles = parse_tile_grid(j.at("tiles").get<std::string>());
    auto& e = r.eval;
    e.images = j.at("images").get<std::size_t>();

    const auto s = read_rows(j, "segmentation", kSegRowNames);
    e.seg.global_acc = s[0];
    e.seg.class_acc = s[1];
    e.seg.mean_iou = s[2];
    const auto d = read_rows(j, "depth", kDepthRowNames);
    e.depth = {d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7], j.at("depth_pixels").get<std::size_t>()};

    for (const auto& v : j.at("per_class_iou")) {
      e.seg.per_class_iou.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
    }
    const auto& cm = j.at("confusion");
    e.confusion = ConfusionMatrix(cm.size());
    for (std::size_t g = 0; g < cm.size(); ++g) {
      if (cm[g].size() != cm.size()) throw FormatError("report: confusion matrix must be square", 0);
      for (std::size_t p = 0; p < cm.size(); ++p) e.confusion.at(g, p) = cm[g][p].get<std::uint64_t>();
    }
    return r;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    throw FormatError(std::string("report: ") + ex.what(), 0);
  }
}

Report parse_report(std::string_view text) {
  OrderedJson j;
  try {
    j = OrderedJson::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError(std::string("report: ") + ex.what(), ex.byte);
  }
  return report_from_json(j);
}

std::string format_report_table(const Report& r) {
  std::string out = fmt::format("split {}  images {}  tiles {}\n\n", r.split.empty() ? "-" : r.split,
                                r.eval.images, format_tile_grid(r.tiles));
  out += "Segmentation       (%)\n";
  const auto s = seg_values(r.eval.seg);
  for (std::size_t i = 0; i < s.size(); ++i) out += fmt::format("  {:<14}{:>8.2f}\n", kSegRowNames[i], 100.0 * s[i]);
  out += "\nDepth\n";
  const auto d = depth_values(r.eval.depth);
  for (std::size_t i = 0; i < d.size(); ++i) out += fmt::format("  {:<14}{:>8.4f}\n", kDepthRowNames[i], d[i]);
  return out;
}

}  // namespace hybridnet
