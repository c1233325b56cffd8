#pragma once

#include <json.hpp>

#include "coupled/model.hpp"

namespace coupled {

nlohmann::json model_config_to_json(const ModelConfig& cfg);

/// Reads keys present in `j` over `base`. Unknown keys and malformed values
/// throw ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace coupled
