#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/core/types.hpp"

namespace mtsim {

struct AssetInfo {
  std::string description;
  Price tick{10};
  // tonnes per contract
  std::int64_t lot{1};
  // notional per contract = price * multiplier
  std::int64_t multiplier{1};
};

struct TradingRules {
  std::string matching_policy{"cda_price_time"};
  // fraction of the last settlement price; nullopt disables the band
  std::optional<double> price_band;
  double initial_margin{0.125};
  double maintenance_margin{0.10};
  // per-contract fee in cents; the hook exists but fees default to zero
  Cents fee_per_contract{0};

  std::int64_t initial_margin_bp() const noexcept;
  std::int64_t maintenance_margin_bp() const noexcept;
};

struct EngineConfig {
  AssetInfo asset;
  TradingRules rules;
  int d_sim{1};
  int d_turn{1};
  Price initial_price{0};
  std::uint64_t rng_seed{0};
  // agents whose positions are disclosed in market snapshots
  std::vector<AgentId> disclosure;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;
};

void to_json(nlohmann::ordered_json& j, const EngineConfig& c);
void from_json(const nlohmann::ordered_json& j, EngineConfig& c);

} // namespace mtsim
