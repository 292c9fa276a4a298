#include "mtsim/engine/order_book.hpp"

#include <algorithm>

namespace mtsim {

namespace {

template <typename Levels>
bool remove_from(Levels& levels, const OrderRequest& o) {
  auto it = levels.find(o.price);
  if (it == levels.end()) return false;
  auto& q = it->second;
  auto pos = std::find(q.begin(), q.end(), o.id);
  if (pos == q.end()) return false;
  q.erase(pos);
  if (q.empty()) levels.erase(it);
  return true;
}

} // namespace

void OrderBook::add(const OrderRequest& o) {
  if (o.side == Side::Buy)
    bids_[o.price].push_back(o.id);
  else
    asks_[o.price].push_back(o.id);
}

bool OrderBook::remove(const OrderRequest& o) {
  return o.side == Side::Buy ? remove_from(bids_, o) : remove_from(asks_, o);
}

void OrderBook::clear() {
  bids_.clear();
  asks_.clear();
}

std::optional<Price> OrderBook::best_bid() const {
  if (bids_.empty()) return std::nullopt;
  return bids_.begin()->first;
}

std::optional<Price> OrderBook::best_ask() const {
  if (asks_.empty()) return std::nullopt;
  return asks_.begin()->first;
}

std::vector<OrderId> OrderBook::resting_ids() const {
  std::vector<OrderId> ids;
  for (const auto& [p, q] : bids_) ids.insert(ids.end(), q.begin(), q.end());
  for (const auto& [p, q] : asks_) ids.insert(ids.end(), q.begin(), q.end());
  return ids;
}

} // namespace mtsim
