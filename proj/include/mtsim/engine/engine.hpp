#pragma once
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtsim/engine/account.hpp"
#include "mtsim/engine/config.hpp"
#include "mtsim/engine/order.hpp"
#include "mtsim/engine/order_book.hpp"
#include "mtsim/record/record_set.hpp"

namespace mtsim {

// Raised when settlement detects a broken conservation law. The frame is
// aborted; the engine must not be used afterwards.
class ConservationError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Raised for calls made in the wrong phase (e.g. submitting after settlement).
class PhaseError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

enum class EnginePhase : std::uint8_t {
  Idle,        // before the first frame or after a settlement
  FrameOpen,   // frame started, no turn open
  Trading,     // turn open; orders accepted
  TurnClosed,  // turn matched; withdrawals allowed
};

std::string_view to_string(EnginePhase p) noexcept;

struct SubmitResult {
  OrderId id{0};
  bool accepted{false};
  RejectReason reason{RejectReason::None};
};

enum class WithdrawError : std::uint8_t { None, UnknownId, NotOwner, AlreadyFilled, NotActive };
std::string_view to_string(WithdrawError e) noexcept;

struct WithdrawResult {
  OrderId id{0};
  WithdrawError error{WithdrawError::None};
  Qty residual{0};
};

struct AccountDelta {
  AgentId agent;
  Cents cash_delta{0};
  Cents margin{0};
  Cents realized_pnl{0};
  Cents unrealized_pnl{0};
};

struct LiquidationEntry {
  AgentId agent;
  Qty volume{0};
  // notional of the forced deals, in cents
  Cents proceeds{0};
  Qty via_book{0};
  Qty via_clearing{0};
};

struct ShortfallEvent {
  AgentId agent;
  // the clearing layer's cash delta; negative when it absorbs a deficit
  Cents clearing_delta{0};
};

struct SettlementReport {
  int frame{0};
  Price price{0};
  std::vector<AccountDelta> deltas;
  std::vector<LiquidationEntry> liquidations;
  std::vector<ShortfallEvent> shortfalls;
  std::vector<OrderId> expired;
  Cents fees{0};
};

struct MarketSnapshot {
  int frame{0};
  int turn{0};
  EnginePhase phase{EnginePhase::Idle};
  Price last_price{0};
  Price last_settlement{0};
  std::optional<BookLevel> best_bid;
  std::optional<BookLevel> best_ask;
  Qty open_interest{0};
  std::map<AgentId, Qty> disclosed_positions;
};

nlohmann::ordered_json snapshot_to_json(const MarketSnapshot& s);

// Volume-weighted deal price, tick-rounded half-up; carries `last` when there
// are no deals.
Price compute_settlement_price(std::span<const Deal> deals, Price last, Price tick);

// The exchange. Single writer: callers serialize all mutating calls.
class Engine {
public:
  Engine(EngineConfig config, std::vector<AccountInit> accounts,
         std::shared_ptr<RecordSet> records = std::make_shared<RecordSet>());

  const EngineConfig& config() const noexcept { return config_; }
  RecordSet& records() noexcept { return *records_; }
  std::shared_ptr<RecordSet> records_ptr() const noexcept { return records_; }

  int frame() const noexcept { return frame_; }
  int turn() const noexcept { return turn_; }
  EnginePhase phase() const noexcept { return phase_; }
  bool finished() const noexcept { return frame_ >= config_.d_sim && phase_ == EnginePhase::Idle; }

  void open_frame();
  void open_turn();

  // Static and margin validation without side effects.
  RejectReason check(const OrderRequest& req) const;
  SubmitResult submit(OrderRequest req, OrderOrigin origin = OrderOrigin::Agent);
  std::vector<SubmitResult> submit_orders(std::vector<OrderRequest> reqs,
                                          OrderOrigin origin = OrderOrigin::Agent);

  // Crosses the book and closes the current turn.
  std::vector<Deal> match_turn();

  std::vector<WithdrawResult> withdraw_orders(const AgentId& caller, std::span<const OrderId> ids);

  SettlementReport settle_frame();

  MarketSnapshot snapshot_market() const;

  const Account& account(const AgentId& id) const;
  bool has_account(const AgentId& id) const { return accounts_.contains(id); }
  const std::map<AgentId, Account>& accounts() const noexcept { return accounts_; }
  const OrderRequest& order(OrderId id) const;
  const std::unordered_map<OrderId, OrderRequest>& orders() const noexcept { return orders_; }
  const OrderBook& book() const noexcept { return book_; }
  std::vector<OrderId> resting_orders_of(const AgentId& agent) const;
  const std::vector<Deal>& frame_deals() const noexcept { return frame_deals_; }
  Price last_price() const noexcept { return last_price_; }
  Price last_settlement() const noexcept { return last_settlement_; }
  Qty open_interest() const noexcept;

  Qty max_affordable(const AgentId& agent, Price price) const;

private:
  struct SettleContext;

  OrderRequest& order_mut(OrderId id);
  Account& account_mut(const AgentId& id);
  void fill(OrderRequest& o, Qty q, Price price);
  void apply_position_change(Account& a, Side side, Qty q, Price price);
  void remove_from_book(OrderRequest& o, OrderStatus status, std::string_view reason);
  Deal make_deal(const OrderRequest& buy, const OrderRequest& sell, Price price, Qty q, bool forced);
  void record_deal(const Deal& d);
  OrderRequest make_liquidation_order(const AgentId& agent, Side side, Price price, Qty q);

  void liquidate(SettleContext& ctx, const AgentId& agent, Price settle);
  Qty liquidate_via_book(SettleContext& ctx, Account& acct, Side side, Qty q, Price settle);
  Qty liquidate_via_clearing(SettleContext& ctx, Account& acct, Side side, Qty q, Price settle);

  EngineConfig config_;
  std::shared_ptr<RecordSet> records_;
  std::map<AgentId, Account> accounts_;
  std::unordered_map<OrderId, OrderRequest> orders_;
  OrderBook book_;
  std::vector<Deal> frame_deals_;

  int frame_{0};
  int turn_{0};
  EnginePhase phase_{EnginePhase::Idle};
  Price last_price_{0};
  Price last_settlement_{0};
  OrderId next_order_id_{1};
  DealId next_deal_id_{1};
  std::uint64_t next_arrival_{1};
  std::int64_t initial_bp_{0};
  std::int64_t maintenance_bp_{0};
};

} // namespace mtsim
