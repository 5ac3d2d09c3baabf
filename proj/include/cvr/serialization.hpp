#pragma once

// JSON mapping of configs and reports. Config readers reject unknown fields
// and report missing required ones by name (ConfigError).

#include <json.hpp>

#include "cvr/evaluation.hpp"
#include "cvr/gradient.hpp"
#include "cvr/synthetic_data.hpp"
#include "cvr/trainer.hpp"

namespace cvr {

nlohmann::json to_json(const GeneratorConfig& cfg);
// Required fields: seed, n_cases.
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MetricsReport& report);

nlohmann::json to_json(const GradCheckReport& report);

/// One CSV row per FROC point: fpi,tpr,threshold.
std::string froc_csv(const MetricsReport& report);

} // namespace cvr
