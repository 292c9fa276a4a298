#pragma once
#include <optional>
#include <string>
#include <string_view>

namespace mtsim {

enum class Direction { StrongSell = 0, Sell = 1, Hold = 2, Buy = 3, StrongBuy = 4 };
enum class Urgency { Low, Mid, High };
enum class Style { Aggressive, Conservative, Custom };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(Urgency u) noexcept;
std::string_view to_string(Style s) noexcept;
std::optional<Direction> direction_from_string(std::string_view s) noexcept;
std::optional<Urgency> urgency_from_string(std::string_view s) noexcept;
std::optional<Style> style_from_string(std::string_view s) noexcept;

// -2 .. 2, and 0 .. 2
int direction_score(Direction d) noexcept;
Direction direction_from_score(int score) noexcept;
int urgency_score(Urgency u) noexcept;
Urgency urgency_from_score(int score) noexcept;
double urgency_multiplier(Urgency u) noexcept;

inline bool is_buy(Direction d) noexcept { return d == Direction::Buy || d == Direction::StrongBuy; }
inline bool is_sell(Direction d) noexcept { return d == Direction::Sell || d == Direction::StrongSell; }

struct Tendency {
  Direction direction{Direction::Hold};
  Urgency urgency{Urgency::Low};
  // target fraction of capacity, [0, 1]
  double exposure{0.0};

  bool operator==(const Tendency&) const = default;
};

} // namespace mtsim
