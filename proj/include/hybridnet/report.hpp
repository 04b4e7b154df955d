#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "hybridnet/trainer.hpp"

namespace hybridnet {

using OrderedJson = nlohmann::ordered_json;

inline constexpr std::array<std::string_view, 8> kDepthRowNames = {
    "γ < 1.25", "γ < 1.25^2", "γ < 1.25^3", "ARD", "SRD", "RMSE-linear", "RMSE-log", "SIE"};
inline constexpr std::array<std::string_view, 3> kSegRowNames = {"G", "C", "IoUclass"};

struct Report {
  std::string split;
  std::optional<TileGrid> tiles;
  EvalReport eval;

  bool operator==(const Report&) const = default;
};

/// {"split", "tiles", "images",
///  "segmentation": [{"metric": "G", "value": ..}, ...],
///  "depth": [{"metric": "γ < 1.25", "value": ..}, ...],
///  "depth_pixels", "per_class_iou", "confusion"}
/// Segmentation values are fractions in [0, 1].
OrderedJson report_to_json(const Report& report);
// Throws FormatError when rows are missing, renamed or out of order.
Report report_from_json(const OrderedJson& j);
Report parse_report(std::string_view text);

// Aligned two-block text table; segmentation rows shown in percent.
std::string format_report_table(const Report& report);

}  // namespace hybridnet
