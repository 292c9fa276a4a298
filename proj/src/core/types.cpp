#include "mtsim/core/types.hpp"

namespace mtsim {

std::string_view to_string(Side s) noexcept { return s == Side::Buy ? "buy" : "sell"; }

std::optional<Side> side_from_string(std::string_view s) noexcept {
  if (s == "buy") return Side::Buy;
  if (s == "sell") return Side::Sell;
  return std::nullopt;
}

} // namespace mtsim
