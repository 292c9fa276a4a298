#pragma once
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtsim {

// Prices are integral currency units per tonne; tick alignment is checked
// against EngineConfig::asset.tick.
using Price = std::int64_t;
// Contracts.
using Qty = std::int64_t;
// Money is kept in integer cents so cash conservation is exact.
using Cents = std::int64_t;

using OrderId = std::uint64_t;
using DealId = std::uint64_t;
using AgentId = std::string;

inline constexpr Cents kCentsPerUnit = 100;

enum class Side : std::uint8_t { Buy, Sell };

constexpr Side opposite(Side s) noexcept { return s == Side::Buy ? Side::Sell : Side::Buy; }
constexpr Qty signed_qty(Side s, Qty q) noexcept { return s == Side::Buy ? q : -q; }

std::string_view to_string(Side s) noexcept;
std::optional<Side> side_from_string(std::string_view s) noexcept;

// Thrown for configuration and input errors the caller can fix.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Round-half-up integer division for non-negative numerators.
constexpr std::int64_t div_round_half_up(std::int64_t num, std::int64_t den) noexcept {
  return (num + den / 2) / den;
}

constexpr std::int64_t div_ceil(std::int64_t num, std::int64_t den) noexcept {
  return num >= 0 ? (num + den - 1) / den : -((-num) / den);
}

} // namespace mtsim
