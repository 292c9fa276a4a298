#include "mtsim/agent/types.hpp"

#include <algorithm>
#include <cmath>

namespace mtsim {

std::string_view to_string(Trend t) noexcept {
  switch (t) {
    case Trend::StrongDown: return "strong_down";
    case Trend::Down: return "down";
    case Trend::Flat: return "flat";
    case Trend::Up: return "up";
    case Trend::StrongUp: return "strong_up";
  }
  return "flat";
}

std::optional<Trend> trend_from_string(std::string_view s) noexcept {
  for (Trend t : {Trend::StrongDown, Trend::Down, Trend::Flat, Trend::Up, Trend::StrongUp})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::string Reflection::prompt_text() const {
  if (empty()) return "(none)";
  std::string out = summary;
  for (const auto& l : lessons) out += "\n- " + l.tag + ": " + l.note;
  return out;
}

bool NewsItem::addressed_to(const AgentId& a) const {
  return broadcast() || std::find(targets.begin(), targets.end(), a) != targets.end();
}

nlohmann::ordered_json news_to_json(const NewsItem& n) {
  nlohmann::ordered_json j{{"frame", n.frame}};
  if (n.broadcast())
    j["targets"] = "all";
  else
    j["targets"] = n.targets;
  j["text"] = n.text;
  j["tags"] = n.tags;
  return j;
}

NewsItem news_from_json(const nlohmann::json& j) {
  NewsItem n;
  n.frame = j.at("frame").get<int>();
  if (j.contains("targets")) {
    const auto& t = j.at("targets");
    if (t.is_string()) {
      if (t.get<std::string>() != "all") n.targets = {t.get<std::string>()};
    } else {
      n.targets = t.get<std::vector<AgentId>>();
    }
  }
  n.text = j.at("text").get<std::string>();
  n.tags = j.value("tags", std::vector<std::string>{});
  return n;
}

Tendency blend_tendency(const Tendency& init, const Tendency& expert, double w) {
  if (w <= 0.0) return init;
  auto mix = [w](int a, int b) {
    const double v = (1.0 - w) * a + w * b;
    return static_cast<int>(std::lround(v));
  };
  Tendency out;
  out.direction = direction_from_score(mix(direction_score(init.direction), direction_score(expert.direction)));
  out.urgency = urgency_from_score(mix(urgency_score(init.urgency), urgency_score(expert.urgency)));
  out.exposure = std::clamp((1.0 - w) * init.exposure + w * expert.exposure, 0.0, 1.0);
  return out;
}

nlohmann::ordered_json tendency_to_json(const Tendency& t) {
  return {{"direction", to_string(t.direction)}, {"urgency", to_string(t.urgency)}, {"exposure", t.exposure}};
}

} // namespace mtsim
