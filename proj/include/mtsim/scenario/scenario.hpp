#pragma once
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/agent/simulation.hpp"
#include "mtsim/generator/generator.hpp"
#include "mtsim/llm/gateway.hpp"

namespace mtsim {

// A scenario problem, anchored by line/column for syntax errors and by a
// JSON pointer for everything else.
class ScenarioError : public ConfigError {
public:
  ScenarioError(std::string where, const std::string& what)
      : ConfigError(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

private:
  std::string where_;
};

struct GeneratorRef {
  // exactly one of the two, relative to the scenario file
  std::string history;
  std::string model;
  FitOptions fit;
  std::optional<double> mu_v;
  std::optional<double> sigma_v;
  std::optional<double> aggressive_mult;
  std::optional<double> conservative_mult;
  std::optional<int> max_orders;
};

// Published figures a run is compared against; reported, never asserted.
struct ScenarioReference {
  std::optional<double> growth_rate;
  std::vector<double> actual_settlements;
  std::optional<double> liquidation_plateau;
  std::string liquidation_agent;
  std::string note;
};

struct Scenario {
  std::string name;
  std::string description;
  std::filesystem::path base_dir;
  EngineConfig engine;
  std::vector<RosterEntry> roster;
  std::vector<NewsItem> news;
  GeneratorRef generator;
  AgentSettings agent;
  std::size_t advice_cap{4000};
  bool deterministic{true};
  std::uint64_t seed{1};
  std::vector<llm::Redaction> redactions;
  std::vector<llm::BackendSpec> backends;
  ScenarioReference reference;
};

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::ordered_json scenario_to_json(const Scenario& s);

// Fits (or loads) the generator the scenario points at and applies the
// scenario's overrides.
GeneratorModel resolve_generator(const Scenario& s);

// {"backends": [...]}; relative script paths are resolved against the file.
std::vector<llm::BackendSpec> load_backends_file(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<Ablation> ablation;
  std::optional<bool> deterministic;
  // replace scenario backends with the same id
  std::vector<llm::BackendSpec> backends;
  std::optional<llm::PromptSet> prompts;
};

struct PreparedRun {
  std::shared_ptr<RecordSet> records;
  std::shared_ptr<llm::Gateway> gateway;
  std::unique_ptr<Simulation> simulation;
};

// Throws ScenarioError when an agent names a backend nobody configured.
PreparedRun prepare_run(const Scenario& s, const RunOptions& opts = {});

} // namespace mtsim
