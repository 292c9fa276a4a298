#pragma once
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mtsim/core/types.hpp"

namespace mtsim {

enum class OrderStatus : std::uint8_t {
  Resting,
  PartiallyFilled,
  Filled,
  Withdrawn,
  Expired,
  Rejected,
};

std::string_view to_string(OrderStatus s) noexcept;

constexpr bool is_active(OrderStatus s) noexcept {
  return s == OrderStatus::Resting || s == OrderStatus::PartiallyFilled;
}

// Where an order came from. Agent and human orders take the identical engine
// path; liquidation orders are generated by settlement.
enum class OrderOrigin : std::uint8_t { Agent, Human, Liquidation };

std::string_view to_string(OrderOrigin o) noexcept;
OrderOrigin origin_from_string(std::string_view s);

enum class RejectReason : std::uint8_t {
  None,
  NonPositivePrice,
  TickMisaligned,
  NonPositiveVolume,
  InsufficientMargin,
  OutsidePriceBand,
  UnknownAgent,
  TradingClosed,
  AgentLiquidated,
};

std::string_view to_string(RejectReason r) noexcept;

struct OrderRequest {
  OrderId id{0};
  AgentId agent;
  Side side{Side::Buy};
  Price price{0};
  Qty volume{0};
  int frame{0};
  int turn{0};
  std::uint64_t arrival{0};
  OrderStatus status{OrderStatus::Resting};
  Qty filled{0};
  OrderOrigin origin{OrderOrigin::Agent};
  // margin held for the unfilled opening part of the order
  Cents reserved{0};

  Qty residual() const noexcept { return volume - filled; }
};

struct Deal {
  DealId id{0};
  OrderId buy_order{0};
  OrderId sell_order{0};
  AgentId buyer;
  AgentId seller;
  Price price{0};
  Qty volume{0};
  int frame{0};
  int turn{0};
  bool forced_liquidation{false};
};

nlohmann::ordered_json order_to_json(const OrderRequest& o);
nlohmann::ordered_json deal_to_json(const Deal& d);
Deal deal_from_json(const nlohmann::ordered_json& j);

} // namespace mtsim
