#include "mtsim/engine/order.hpp"

namespace mtsim {

std::string_view to_string(OrderStatus s) noexcept {
  switch (s) {
    case OrderStatus::Resting: return "resting";
    case OrderStatus::PartiallyFilled: return "partially_filled";
    case OrderStatus::Filled: return "filled";
    case OrderStatus::Withdrawn: return "withdrawn";
    case OrderStatus::Expired: return "expired";
    case OrderStatus::Rejected: return "rejected";
  }
  return "unknown";
}

std::string_view to_string(OrderOrigin o) noexcept {
  switch (o) {
    case OrderOrigin::Agent: return "agent";
    case OrderOrigin::Human: return "human";
    case OrderOrigin::Liquidation: return "liquidation";
  }
  return "agent";
}

OrderOrigin origin_from_string(std::string_view s) {
  if (s == "agent") return OrderOrigin::Agent;
  if (s == "human") return OrderOrigin::Human;
  if (s == "liquidation") return OrderOrigin::Liquidation;
  throw ConfigError("unknown order origin '" + std::string(s) + "'");
}

std::string_view to_string(RejectReason r) noexcept {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::NonPositivePrice: return "price must be positive";
    case RejectReason::TickMisaligned: return "price not aligned to tick";
    case RejectReason::NonPositiveVolume: return "volume must be at least 1";
    case RejectReason::InsufficientMargin: return "insufficient margin";
    case RejectReason::OutsidePriceBand: return "price outside band";
    case RejectReason::UnknownAgent: return "unknown agent";
    case RejectReason::TradingClosed: return "trading closed";
    case RejectReason::AgentLiquidated: return "account under liquidation";
  }
  return "unknown";
}

nlohmann::ordered_json order_to_json(const OrderRequest& o) {
  return {{"id", o.id},           {"agent", o.agent},   {"side", to_string(o.side)},
          {"price", o.price},     {"volume", o.volume}, {"frame", o.frame},
          {"turn", o.turn},       {"arrival", o.arrival}};
}

nlohmann::ordered_json deal_to_json(const Deal& d) {
  return {{"id", d.id},
          {"buy_order", d.buy_order},
          {"sell_order", d.sell_order},
          {"buyer", d.buyer},
          {"seller", d.seller},
          {"price", d.price},
          {"volume", d.volume},
          {"frame", d.frame},
          {"turn", d.turn},
          {"forced_liquidation", d.forced_liquidation}};
}

Deal deal_from_json(const nlohmann::ordered_json& j) {
  Deal d;
  d.id = j.at("id").get<DealId>();
  d.buy_order = j.at("buy_order").get<OrderId>();
  d.sell_order = j.at("sell_order").get<OrderId>();
  d.buyer = j.at("buyer").get<std::string>();
  d.seller = j.at("seller").get<std::string>();
  d.price = j.at("price").get<Price>();
  d.volume = j.at("volume").get<Qty>();
  d.frame = j.at("frame").get<int>();
  d.turn = j.at("turn").get<int>();
  d.forced_liquidation = j.at("forced_liquidation").get<bool>();
  return d;
}

} // namespace mtsim
