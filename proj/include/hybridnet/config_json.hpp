#pragma once

#include "json.hpp"

#include "hybridnet/datakit.hpp"
#include "hybridnet/model.hpp"
#include "hybridnet/trainer.hpp"

namespace hybridnet {

using Json = nlohmann::json;

// Conversions reject unknown keys with ConfigError; missing keys keep the
// value already in `out`.
Json to_json(const ModelConfig& c);
void from_json(const Json& j, ModelConfig& out);
Json to_json(const TrainConfig& c);
void from_json(const Json& j, TrainConfig& out);
Json to_json(const GenConfig& c);
void from_json(const Json& j, GenConfig& out);

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const char* section);

}  // namespace hybridnet
