#include "mtsim/generator/tendency.hpp"

#include <algorithm>

namespace mtsim {

std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::StrongSell: return "strong_sell";
    case Direction::Sell: return "sell";
    case Direction::Hold: return "hold";
    case Direction::Buy: return "buy";
    case Direction::StrongBuy: return "strong_buy";
  }
  return "hold";
}

std::string_view to_string(Urgency u) noexcept {
  switch (u) {
    case Urgency::Low: return "low";
    case Urgency::Mid: return "mid";
    case Urgency::High: return "high";
  }
  return "low";
}

std::string_view to_string(Style s) noexcept {
  switch (s) {
    case Style::Aggressive: return "aggressive";
    case Style::Conservative: return "conservative";
    case Style::Custom: return "custom";
  }
  return "custom";
}

std::optional<Direction> direction_from_string(std::string_view s) noexcept {
  for (int i = 0; i < 5; ++i)
    if (to_string(static_cast<Direction>(i)) == s) return static_cast<Direction>(i);
  return std::nullopt;
}

std::optional<Urgency> urgency_from_string(std::string_view s) noexcept {
  for (Urgency u : {Urgency::Low, Urgency::Mid, Urgency::High})
    if (to_string(u) == s) return u;
  return std::nullopt;
}

std::optional<Style> style_from_string(std::string_view s) noexcept {
  for (Style v : {Style::Aggressive, Style::Conservative, Style::Custom})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

int direction_score(Direction d) noexcept { return static_cast<int>(d) - 2; }

Direction direction_from_score(int score) noexcept {
  return static_cast<Direction>(std::clamp(score, -2, 2) + 2);
}

int urgency_score(Urgency u) noexcept { return static_cast<int>(u); }

Urgency urgency_from_score(int score) noexcept { return static_cast<Urgency>(std::clamp(score, 0, 2)); }

double urgency_multiplier(Urgency u) noexcept {
  switch (u) {
    case Urgency::Low: return 0.5;
    case Urgency::Mid: return 0.75;
    case Urgency::High: return 1.0;
  }
  return 0.5;
}

} // namespace mtsim
