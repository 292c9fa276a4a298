#pragma once
#include <json.hpp>

#include "mtsim/core/types.hpp"

namespace mtsim {

struct Account {
  AgentId agent;
  Cents cash{0};
  Cents margin_posted{0};
  // margin held by this account's resting orders
  Cents reserved{0};
  Cents realized_pnl{0};
  Cents unrealized_pnl{0};
  // long positive
  Qty position{0};
  double avg_entry{0.0};
  // position valued at the last mark plus signed notional of trades since,
  // in price units (multiply by multiplier and cents to get money)
  std::int64_t basis{0};
  bool liquidation{false};

  Cents available() const noexcept { return cash - margin_posted - reserved; }
};

// Initial state of one account at engine start.
struct AccountInit {
  AgentId agent;
  Cents cash{0};
  Qty position{0};
};

// Margin in cents for `volume` contracts at `price`, rounded up.
Cents margin_for(Price price, Qty volume, std::int64_t multiplier, std::int64_t fraction_bp) noexcept;

// floor(available / per-contract margin at `price`); never negative.
Qty max_affordable_volume(Cents available, Price price, std::int64_t multiplier,
                          std::int64_t initial_bp) noexcept;

nlohmann::ordered_json account_to_json(const Account& a);
Account account_from_json(const nlohmann::ordered_json& j);

} // namespace mtsim
