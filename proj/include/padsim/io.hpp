#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "padsim/harness.hpp"

namespace padsim::io {

using nlohmann::json;

json to_json(const GenerativeParams& params);
// Outcome-indexed fields may be arrays in outcome order or objects keyed by
// outcome name. Random effects take either a full 14 x 14 matrix
// ("random_effects_cov") or a shape ("random_effects"). Throws ConfigError.
GenerativeParams params_from_json(const json& j);

json to_json(const TrialDesign& design);
TrialDesign design_from_json(const json& j, TrialDesign base = {});

json to_json(const DropoutSpec& spec);
DropoutSpec dropout_from_json(const json& j, DropoutSpec base = {});

json to_json(const ScenarioConfig& config);
// Unknown keys are rejected. A string "params" is a path resolved against
// `base_dir`; so is "forest".
ScenarioConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

// 64-bit FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const ScenarioConfig& config);
// "# padsim config_hash=<hex> seed=<seed>"
std::string file_header(const ScenarioConfig& config);

json to_json(const ForestArtifact& artifact);
ForestArtifact forest_from_json(const json& j);
void save_forest(const ForestArtifact& artifact, const std::filesystem::path& path);
ForestArtifact load_forest(const std::filesystem::path& path);

// Shortest text that reads back to the same double.
std::string format_double(double x);

void write_replicates(const std::vector<ReplicateRow>& rows, const std::filesystem::path& path,
                      const std::string& header);
// Skips '#' comment lines. Throws DataError on malformed rows.
std::vector<ReplicateRow> read_replicates(const std::filesystem::path& path);
// Header comment of a CSV file written by this library, or empty.
std::string read_header(const std::filesystem::path& path);

// Columns subject,arm,time,pacc,baseline_pacc,age,apoe4; arm is placebo or
// treatment (or 0 / 1). Empty or NA cells are missing.
void write_longitudinal(const LongitudinalDataset& data, const std::filesystem::path& path,
                        const std::string& header = {});
LongitudinalDataset read_longitudinal(const std::filesystem::path& path,
                                      std::vector<double> visit_grid, double horizon);
// Columns subject,arm,time,event,age,apoe4.
void write_survival(const SurvivalDataset& data, const std::filesystem::path& path,
                    const std::string& header = {});
SurvivalDataset read_survival(const std::filesystem::path& path);

}  // namespace padsim::io
