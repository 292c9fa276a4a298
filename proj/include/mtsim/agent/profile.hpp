#pragma once
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/core/types.hpp"
#include "mtsim/generator/tendency.hpp"

namespace mtsim {

struct AgentProfile {
  AgentId id;
  // role and background, e.g. "nickel producer hedging output"
  std::string persona;
  Style style{Style::Custom};
  std::vector<std::string> knowledge;
  std::string backend{"foundation"};
  // empty: the simulation-wide expert backend
  std::string expert_backend;
  double temperature{0.7};
  double top_p{0.9};
  // how much of the expert's refinement is taken over, [0, 1]
  double uptake{0.5};
  bool human_proxy{false};

  // Throws ConfigError.
  void validate() const;
};

nlohmann::ordered_json profile_to_json(const AgentProfile& p);
AgentProfile profile_from_json(const nlohmann::json& j);

} // namespace mtsim
