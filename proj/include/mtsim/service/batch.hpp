#pragma once
#include <filesystem>

#include <json.hpp>

#include "mtsim/metrics/metrics.hpp"
#include "mtsim/scenario/scenario.hpp"

namespace mtsim {

struct BatchResult {
  std::filesystem::path log;
  RunOutcome outcome{RunOutcome::Finished};
  nlohmann::ordered_json summary;
};

// Runs one scenario headless into `dir`: records.jsonl, metrics/ and graph/.
BatchResult run_batch(const Scenario& s, const RunOptions& opts, const std::filesystem::path& dir);

ExportOptions export_options_for(const Scenario& s);

} // namespace mtsim
