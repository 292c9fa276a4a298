#pragma once
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/core/types.hpp"
#include "mtsim/engine/engine.hpp"
#include "mtsim/generator/tendency.hpp"

namespace mtsim {

enum class Trend { StrongDown, Down, Flat, Up, StrongUp };
std::string_view to_string(Trend t) noexcept;
std::optional<Trend> trend_from_string(std::string_view s) noexcept;

struct MarketAssessment {
  AgentId agent;
  int frame{0};
  Trend trend{Trend::Flat};
  double confidence{0.0};
  std::string analysis;
  std::vector<std::string> expert_advice;
  // parse or backend failure replaced the model's answer
  bool fallback{false};
};

enum class StrategyStage { Init, Final };

struct TradingStrategy {
  AgentId agent;
  int frame{0};
  int turn{0};
  StrategyStage stage{StrategyStage::Init};
  Tendency tendency;
  std::string rationale;
  bool fallback{false};
  // decided without a model call
  bool skipped{false};
};

struct Lesson {
  std::string tag;
  std::string note;
};

struct Reflection {
  AgentId agent;
  int frame{0};
  std::string summary;
  std::vector<Lesson> lessons;
  bool fallback{false};

  bool empty() const noexcept { return summary.empty() && lessons.empty(); }
  // The text injected into the next frame's strategy prompt.
  std::string prompt_text() const;
};

// An environment item: broadcast news or an agent-targeted message.
struct NewsItem {
  int frame{1};
  // empty: everyone
  std::vector<AgentId> targets;
  std::string text;
  std::vector<std::string> tags;

  bool broadcast() const noexcept { return targets.empty(); }
  bool addressed_to(const AgentId& a) const;
};

nlohmann::ordered_json news_to_json(const NewsItem& n);
NewsItem news_from_json(const nlohmann::json& j);

struct ObservationBundle {
  int frame{0};
  int d_sim{0};
  std::vector<NewsItem> items;
  MarketSnapshot market;
  // settlement prices of the frames so far, oldest first
  std::vector<Price> settlements;
};

// Blends preliminary and expert-suggested tendencies. Direction and urgency
// are mixed on their ordinal scales and rounded half away from zero;
// exposure is mixed linearly. w = 0 returns `init` unchanged.
Tendency blend_tendency(const Tendency& init, const Tendency& expert, double w);

nlohmann::ordered_json tendency_to_json(const Tendency& t);

} // namespace mtsim
