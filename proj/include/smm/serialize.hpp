#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "smm/attacks.hpp"
#include "smm/estimators.hpp"
#include "smm/experiments.hpp"
#include "smm/models.hpp"
#include "smm/selection.hpp"

namespace smm {

using Json = nlohmann::json;

/// Transport weights and other possibly-infinite reals are written as the string "inf".
Json real_to_json(double v);
double real_from_json(const Json& j, const char* what);

Json to_json(const ScenarioParams& p);
ScenarioParams scenario_params_from_json(const Json& j);

Json to_json(const ParamModel& model);  // architecture and theta
ParamModel model_from_json(const Json& j);

Json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_from_json(const Json& j, OptimizerConfig base = {});
Json to_json(const SmmConfig& c);
SmmConfig smm_config_from_json(const Json& j, SmmConfig base = {});
Json to_json(const VmmConfig& c);
VmmConfig vmm_config_from_json(const Json& j, VmmConfig base = {});
Json to_json(const GridSpec& g);
GridSpec grid_from_json(const Json& j, GridSpec base = {});

/// FitResult with the fitted model and an echo of the configuration used.
Json to_json(const FitResult& fit, const ParamModel& model, const Json& config_echo);

Json to_json(const ExperimentConfig& c);
/// Keys not listed in ExperimentConfig are rejected. Missing keys keep the defaults of
/// the named experiment.
ExperimentConfig experiment_config_from_json(const Json& j);

Json to_json(const ExpansionReport& r);
Json to_json(const DualityReport& r);

std::string records_csv(const ExperimentResult& r);
std::string aggregates_csv(const ExperimentResult& r);
std::string score_table_csv(const SelectionResult& s);
std::string sweep_csv(const std::vector<SweepRow>& rows, Method method);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace smm
