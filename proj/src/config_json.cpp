#include "hybridnet/config_json.hpp"

#include <string>

#include "hybridnet/errors.hpp"

namespace hybridnet {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out, const char* section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

template <typename T>
void read_positive(const Json& j, const char* key, T& out, const char* section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned()) {
    throw ConfigError(std::string(section) + "." + key + ": expected a non-negative integer");
  }
  read(j, key, out, section);
}

}  // namespace

Json to_json(const ModelConfig& c) {
  return Json{{"input_h", c.input_h},
              {"input_w", c.input_w},
              {"num_classes", c.num_classes},
              {"feature_channels", c.feature_channels},
              {"global_channels", c.global_channels},
              {"global_fc_dim", c.global_fc_dim},
              {"refine_channels", c.refine_channels},
              {"aspp_rates", c.aspp_rates},
              {"aspp_channels", c.aspp_channels},
              {"seed", c.seed}};
}

void from_json(const Json& j, ModelConfig& c) {
  const char* s = "model";
  reject_unknown_keys(j,
                      {"input_h", "input_w", "num_classes", "feature_channels", "global_channels", "global_fc_dim",
                       "refine_channels", "aspp_rates", "aspp_channels", "seed"},
                      s);
  read_positive(j, "input_h", c.input_h, s);
  read_positive(j, "input_w", c.input_w, s);
  read_positive(j, "num_classes", c.num_classes, s);
  read(j, "feature_channels", c.feature_channels, s);
  read(j, "global_channels", c.global_channels, s);
  read_positive(j, "global_fc_dim", c.global_fc_dim, s);
  read_positive(j, "refine_channels", c.refine_channels, s);
  read(j, "aspp_rates", c.aspp_rates, s);
  read_positive(j, "aspp_channels", c.aspp_channels, s);
  read_positive(j, "seed", c.seed, s);
}

Json to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"lr", c.lr},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"iterations", c.iterations},
              {"seed", c.seed},
              {"stage", std::string(stage_name(c.stage))},
              {"reduction", c.reduction == Reduction::mean ? "mean" : "sum"},
              {"log_every", c.log_every},
              {"ignore_label", c.ignore_label},
              {"norm_epsilon", c.norm_epsilon}};
}

void from_json(const Json& j, TrainConfig& c) {
  const char* s = "train";
  reject_unknown_keys(j,
                      {"alpha", "lr", "momentum", "weight_decay", "iterations", "seed", "stage", "reduction",
                       "log_every", "ignore_label", "norm_epsilon"},
                      s);
  read(j, "alpha", c.alpha, s);
  read(j, "lr", c.lr, s);
  read(j, "momentum", c.momentum, s);
  read(j, "weight_decay", c.weight_decay, s);
  read_positive(j, "iterations", c.iterations, s);
  read_positive(j, "seed", c.seed, s);
  if (j.contains("stage")) {
    std::string name;
    read(j, "stage", name, s);
    c.stage = parse_stage(name);
  }
  if (j.contains("reduction")) {
    std::string name;
    read(j, "reduction", name, s);
    if (name == "mean") {
      c.reduction = Reduction::mean;
    } else if (name == "sum") {
      c.reduction = Reduction::sum;
    } else {
      throw ConfigError("train.reduction: expected 'sum' or 'mean', got '" + name + "'");
    }
  }
  read_positive(j, "log_every", c.log_every, s);
  read(j, "ignore_label", c.ignore_label, s);
  read(j, "norm_epsilon", c.norm_epsilon, s);
}

Json to_json(const GenConfig& c) {
  return Json{{"h", c.h},
              {"w", c.w},
              {"num_classes", c.num_classes},
              {"objects_min", c.objects_min},
              {"objects_max", c.objects_max},
              {"near", c.near},
              {"far", c.far},
              {"ignore_border", c.ignore_border},
              {"ignore_label", c.ignore_label},
              {"seed", c.seed}};
}

void from_json(const Json& j, GenConfig& c) {
  const char* s = "gen";
  reject_unknown_keys(
      j, {"h", "w", "num_classes", "objects_min", "objects_max", "near", "far", "ignore_border", "ignore_label", "seed"},
      s);
  read_positive(j, "h", c.h, s);
  read_positive(j, "w", c.w, s);
  read_positive(j, "num_classes", c.num_classes, s);
  read_positive(j, "objects_min", c.objects_min, s);
  read_positive(j, "objects_max", c.objects_max, s);
  read(j, "near", c.near, s);
  read(j, "far", c.far, s);
  read_positive(j, "ignore_border", c.ignore_border, s);
  read(j, "ignore_label", c.ignore_label, s);
  read_positive(j, "seed", c.seed, s);
}

}  // namespace hybridnet
