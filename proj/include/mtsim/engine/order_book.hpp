#pragma once
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "mtsim/engine/order.hpp"

namespace mtsim {

struct BookLevel {
  Price price{0};
  Qty volume{0};
  std::size_t orders{0};
};

// Resting order ids grouped into price levels; each level keeps arrival order.
// Order bodies live in the engine's order table.
class OrderBook {
public:
  using BidLevels = std::map<Price, std::deque<OrderId>, std::greater<>>;
  using AskLevels = std::map<Price, std::deque<OrderId>, std::less<>>;

  void add(const OrderRequest& o);
  // Removes an id from its level; returns false if it was not resting.
  bool remove(const OrderRequest& o);
  void clear();

  bool empty() const noexcept { return bids_.empty() && asks_.empty(); }
  std::optional<Price> best_bid() const;
  std::optional<Price> best_ask() const;

  BidLevels& bids() noexcept { return bids_; }
  AskLevels& asks() noexcept { return asks_; }
  const BidLevels& bids() const noexcept { return bids_; }
  const AskLevels& asks() const noexcept { return asks_; }

  // All resting ids, bids then asks, each in priority order.
  std::vector<OrderId> resting_ids() const;

private:
  BidLevels bids_;
  AskLevels asks_;
};

} // namespace mtsim
