#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "da/montecarlo.hpp"

namespace da {

// Deterministic death sequence replayed with a full event log.
struct Scenario {
    std::string name;
    std::vector<Death> deaths;
    double stop_at = std::numeric_limits<double>::infinity();
};

struct OutputConfig {
    std::string dir;
    std::vector<std::string> formats{"csv", "json"};
    // Random paths whose event logs are written next to the summary.
    std::size_t event_log_samples = 0;
};

// Units: time in years, money in abstract currency units.
struct RunConfig {
    SimulationConfig sim;
    std::vector<Scenario> scenarios;
    OutputConfig output;
    // Raw scheme block, echoed into summaries.
    nlohmann::json scheme_block;
};

RunConfig parse_config(const nlohmann::json& doc, const std::string& base_dir = ".");
RunConfig parse_config_toml(std::string_view text, const std::string& base_dir = ".");
// Dispatches on extension: .toml, otherwise JSON.
RunConfig load_config(const std::string& path);

nlohmann::json toml_to_json(std::string_view text);

}  // namespace da
