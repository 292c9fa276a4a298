#include "mtsim/agent/profile.hpp"

namespace mtsim {

void AgentProfile::validate() const {
  if (id.empty()) throw ConfigError("agent profile without id");
  if (!(temperature >= 0.0)) throw ConfigError("agent '" + id + "': temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("agent '" + id + "': top_p must be in (0, 1]");
  if (!(uptake >= 0.0 && uptake <= 1.0)) throw ConfigError("agent '" + id + "': uptake must be in [0, 1]");
  if (!human_proxy && backend.empty()) throw ConfigError("agent '" + id + "': no backend");
}

nlohmann::ordered_json profile_to_json(const AgentProfile& p) {
  return {{"id", p.id},
          {"persona", p.persona},
          {"style", to_string(p.style)},
          {"knowledge", p.knowledge},
          {"backend", p.backend},
          {"expert_backend", p.expert_backend},
          {"temperature", p.temperature},
          {"top_p", p.top_p},
          {"uptake", p.uptake},
          {"human_proxy", p.human_proxy}};
}

AgentProfile profile_from_json(const nlohmann::json& j) {
  AgentProfile p;
  p.id = j.at("id").get<std::string>();
  p.persona = j.value("persona", std::string{});
  const auto style = j.value("style", std::string{"custom"});
  auto s = style_from_string(style);
  if (!s) throw ConfigError("agent '" + p.id + "': unknown style '" + style + "'");
  p.style = *s;
  if (j.contains("knowledge")) {
    const auto& k = j.at("knowledge");
    if (k.is_string())
      p.knowledge = {k.get<std::string>()};
    else
      p.knowledge = k.get<std::vector<std::string>>();
  }
  p.backend = j.value("backend", std::string{"foundation"});
  p.expert_backend = j.value("expert_backend", std::string{});
  p.temperature = j.value("temperature", 0.7);
  p.top_p = j.value("top_p", 0.9);
  p.uptake = j.value("uptake", 0.5);
  p.human_proxy = j.value("human_proxy", false);
  p.validate();
  return p;
}

} // namespace mtsim
