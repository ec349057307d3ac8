#pragma once

// nlohmann/json bindings for the config records. Private to the core library.

#include <set>
#include <string>

#include <json.hpp>

#include "sdlpgc/data.hpp"
#include "sdlpgc/errors.hpp"
#include "sdlpgc/model.hpp"
#include "sdlpgc/training.hpp"

namespace sdlpgc::detail {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where);

json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);

json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

json to_json(const data::NormStats& n);
data::NormStats norm_stats_from_json(const json& j);

json to_json(const data::SplitSpec& s);
data::SplitSpec split_spec_from_json(const json& j);

}  // namespace sdlpgc::detail
