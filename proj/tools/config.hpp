#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tcontrol/covariates.hpp"
#include "tcontrol/grid.hpp"
#include "tcontrol/hmm.hpp"
#include "tcontrol/ingest.hpp"

namespace tcontrol::cli {

using nlohmann::json;

/// Built-in defaults for every key a subcommand reads. A config file is
/// merged over these, then command-line flags over the result; the merged
/// document is what the manifest records.
json default_config();

/// Loads a config file. A run manifest is accepted too, in which case its
/// embedded "config" object is used.
json load_config_file(const std::string& path);

GridSpec grid_from(const json& j, const std::string& where = "grid");
HmmParams model_from(const json& j);
EventSchema schema_from(const json& j);
FilterPolicy policy_from(const json& j);
std::vector<PerturbationSpec> perturbations_from(const json& j);
std::vector<GridSpec> sweep_targets_from(const json& sweep, const GridSpec& base);

/// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const json& config);

}  // namespace tcontrol::cli
