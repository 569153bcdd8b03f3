#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsds/allocation.hpp"
#include "nsds/baselines.hpp"
#include "nsds/pipeline.hpp"

namespace nsds {

inline constexpr std::string_view kToolVersion = "0.1.0";

using Table = std::vector<std::vector<double>>;

struct SensitivityReport {
    std::string model_id;
    Method metric = Method::nsds;
    std::string config_digest;
    std::string tool_version{kToolVersion};

    // NSDS only.
    std::vector<ComponentKind> component_kinds;
    Table raw_nv, raw_se, normalized_nv, normalized_se;
    std::vector<double> s_nv, s_se, s_nsds;

    // Baselines only.
    std::vector<double> values;
    Direction direction = Direction::higher_is_sensitive;
    std::vector<std::size_t> outliers;

    std::optional<BitAllocationPlan> plan;

    std::size_t num_layers() const { return metric == Method::nsds ? s_nsds.size() : values.size(); }
    // The per-layer vector that drives allocation.
    LayerScoreVector layer_scores() const;

    friend bool operator==(const SensitivityReport&, const SensitivityReport&) = default;
};

SensitivityReport make_report(std::string model_id, const ArchConfig& config, const NsdsResult& result);
SensitivityReport make_report(std::string model_id, const ArchConfig& config, const LayerScoreVector& scores);

nlohmann::json to_json(const SensitivityReport& report);
SensitivityReport report_from_json(const nlohmann::json& j);

// Canonical bytes: sorted keys, shortest round-trip floats, trailing newline.
std::string emit_json(const SensitivityReport& report);
// NSDS: "layer,s_nv,s_se,s_nsds,bits"; baselines: "layer,value,bits".
// The bits column is empty when no plan is attached.
std::string emit_csv(const SensitivityReport& report);

// Shortest decimal that parses back to the same double.
std::string format_double(double value);

}  // namespace nsds
