#pragma once

#include <string>

#include <json.hpp>

#include "polyfuse/fusion.hpp"
#include "polyfuse/training.hpp"

namespace polyfuse {

/// {variant, m, a, d, n, rank | ranks:[k1,k2,k3]}; rank fields appear only
/// where the variant uses them. Unknown keys are rejected.
nlohmann::json config_to_json(const FusionConfig& config);
FusionConfig config_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const TrainReport& report);

/// Bundle format: prefix.json holds a manifest {format, version, layout,
/// encoding, kind, config, fields:[{name, dims, offset}]} with offsets in
/// float64 elements; prefix.blob holds the concatenated little-endian
/// float64 field data in manifest order.
void save_layer(const FusionLayer& layer, const std::string& prefix);
FusionLayer load_layer(const std::string& prefix);

/// Task bundles store the teacher's arrays (field names "teacher.<name>")
/// followed by the sample matrices Za (a x N), Zd (d x N), Y (m x N), one
/// sample per column.
void save_task(const SyntheticTask& task, const std::string& prefix);
SyntheticTask load_task(const std::string& prefix);

}  // namespace polyfuse
