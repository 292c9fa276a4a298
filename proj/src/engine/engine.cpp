#include "mtsim/engine/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace mtsim {

using nlohmann::ordered_json;

std::string_view to_string(EnginePhase p) noexcept {
  switch (p) {
    case EnginePhase::Idle: return "idle";
    case EnginePhase::FrameOpen: return "frame_open";
    case EnginePhase::Trading: return "trading";
    case EnginePhase::TurnClosed: return "turn_closed";
  }
  return "idle";
}

std::string_view to_string(WithdrawError e) noexcept {
  switch (e) {
    case WithdrawError::None: return "none";
    case WithdrawError::UnknownId: return "unknown order id";
    case WithdrawError::NotOwner: return "order belongs to another agent";
    case WithdrawError::AlreadyFilled: return "order already filled";
    case WithdrawError::NotActive: return "order no longer active";
  }
  return "none";
}

ordered_json snapshot_to_json(const MarketSnapshot& s) {
  auto level = [](const std::optional<BookLevel>& l) -> ordered_json {
    if (!l) return nullptr;
    return {{"price", l->price}, {"volume", l->volume}, {"orders", l->orders}};
  };
  ordered_json holders = ordered_json::object();
  for (const auto& [agent, pos] : s.disclosed_positions) holders[agent] = pos;
  return {{"frame", s.frame},
          {"turn", s.turn},
          {"phase", to_string(s.phase)},
          {"last_price", s.last_price},
          {"last_settlement", s.last_settlement},
          {"best_bid", level(s.best_bid)},
          {"best_ask", level(s.best_ask)},
          {"open_interest", s.open_interest},
          {"major_holders", holders}};
}

Price compute_settlement_price(std::span<const Deal> deals, Price last, Price tick) {
  __int128 num = 0;
  __int128 vol = 0;
  for (const auto& d : deals) {
    num += static_cast<__int128>(d.price) * d.volume;
    vol += d.volume;
  }
  if (vol == 0) return last;
  const __int128 den = vol * tick;
  const __int128 ticks = (2 * num + den) / (2 * den);
  return static_cast<Price>(ticks * tick);
}

struct Engine::SettleContext {
  Price price{0};
  std::map<AgentId, Cents> cash_delta;
  std::map<AgentId, LiquidationEntry> liquidations;
  std::vector<ShortfallEvent> shortfalls;
  Cents fees{0};
};

Engine::Engine(EngineConfig config, std::vector<AccountInit> accounts,
               std::shared_ptr<RecordSet> records)
    : config_(std::move(config)), records_(std::move(records)) {
  config_.validate();
  initial_bp_ = config_.rules.initial_margin_bp();
  maintenance_bp_ = config_.rules.maintenance_margin_bp();
  last_price_ = config_.initial_price;
  last_settlement_ = config_.initial_price;

  Qty net = 0;
  ordered_json init = ordered_json::array();
  for (const auto& a : accounts) {
    if (a.agent.empty()) throw ConfigError("account with empty agent id");
    if (accounts_.contains(a.agent)) throw ConfigError("duplicate agent id '" + a.agent + "'");
    if (a.cash < 0) throw ConfigError("negative initial cash for '" + a.agent + "'");
    Account acct;
    acct.agent = a.agent;
    acct.cash = a.cash;
    acct.position = a.position;
    acct.avg_entry = a.position != 0 ? static_cast<double>(config_.initial_price) : 0.0;
    acct.basis = a.position * config_.initial_price;
    acct.margin_posted = std::min(
        margin_for(config_.initial_price, std::abs(a.position), config_.asset.multiplier, initial_bp_),
        acct.cash);
    net += a.position;
    accounts_.emplace(a.agent, acct);
    init.push_back({{"agent", a.agent}, {"cash", a.cash}, {"position", a.position}});
  }
  if (net != 0) throw ConfigError("initial positions inconsistent: longs != shorts");
  for (const auto& d : config_.disclosure)
    if (!accounts_.contains(d)) throw ConfigError("disclosure list names unknown agent '" + d + "'");

  ordered_json cfg;
  to_json(cfg, config_);
  records_->append("engine_init", {{"config", cfg}, {"accounts", init}});
}

void Engine::open_frame() {
  if (phase_ != EnginePhase::Idle) throw PhaseError("open_frame: previous frame not settled");
  if (frame_ >= config_.d_sim) throw PhaseError("open_frame: all frames simulated");
  ++frame_;
  turn_ = 0;
  phase_ = EnginePhase::FrameOpen;
  records_->append("frame_start", {{"frame", frame_}});
}

void Engine::open_turn() {
  if (phase_ != EnginePhase::FrameOpen && phase_ != EnginePhase::TurnClosed)
    throw PhaseError("open_turn: no frame open");
  if (turn_ >= config_.d_turn) throw PhaseError("open_turn: all turns of the frame used");
  ++turn_;
  phase_ = EnginePhase::Trading;
  records_->append("turn_open", {{"frame", frame_}, {"turn", turn_}});
}

RejectReason Engine::check(const OrderRequest& req) const {
  auto it = accounts_.find(req.agent);
  if (it == accounts_.end()) return RejectReason::UnknownAgent;
  if (phase_ != EnginePhase::Trading) return RejectReason::TradingClosed;
  if (req.price <= 0) return RejectReason::NonPositivePrice;
  if (req.price % config_.asset.tick != 0) return RejectReason::TickMisaligned;
  if (req.volume < 1) return RejectReason::NonPositiveVolume;
  if (config_.rules.price_band) {
    const double ref = static_cast<double>(last_settlement_);
    if (std::abs(static_cast<double>(req.price) - ref) > *config_.rules.price_band * ref)
      return RejectReason::OutsidePriceBand;
  }
  const Cents need = margin_for(req.price, req.volume, config_.asset.multiplier, initial_bp_);
  if (need > it->second.available()) return RejectReason::InsufficientMargin;
  return RejectReason::None;
}

SubmitResult Engine::submit(OrderRequest req, OrderOrigin origin) {
  req.id = next_order_id_++;
  req.frame = frame_;
  req.turn = turn_;
  req.filled = 0;
  req.origin = origin;
  req.reserved = 0;
  const RejectReason reason = check(req);
  if (reason != RejectReason::None) {
    req.status = OrderStatus::Rejected;
    req.arrival = 0;
    records_->append("order_rejected", {{"frame", frame_},
                                        {"turn", turn_},
                                        {"origin", to_string(origin)},
                                        {"reason", to_string(reason)},
                                        {"order", order_to_json(req)}});
    orders_.emplace(req.id, req);
    return {req.id, false, reason};
  }
  req.arrival = next_arrival_++;
  req.status = OrderStatus::Resting;
  req.reserved = margin_for(req.price, req.volume, config_.asset.multiplier, initial_bp_);
  accounts_.at(req.agent).reserved += req.reserved;
  records_->append("order_accepted", {{"frame", frame_},
                                      {"turn", turn_},
                                      {"origin", to_string(origin)},
                                      {"order", order_to_json(req)}});
  book_.add(req);
  const OrderId id = req.id;
  orders_.emplace(id, std::move(req));
  return {id, true, RejectReason::None};
}

std::vector<SubmitResult> Engine::submit_orders(std::vector<OrderRequest> reqs, OrderOrigin origin) {
  std::vector<SubmitResult> out;
  out.reserve(reqs.size());
  for (auto& r : reqs) out.push_back(submit(std::move(r), origin));
  return out;
}

OrderRequest& Engine::order_mut(OrderId id) {
  auto it = orders_.find(id);
  if (it == orders_.end()) throw std::out_of_range("unknown order id " + std::to_string(id));
  return it->second;
}

const OrderRequest& Engine::order(OrderId id) const {
  auto it = orders_.find(id);
  if (it == orders_.end()) throw std::out_of_range("unknown order id " + std::to_string(id));
  return it->second;
}

Account& Engine::account_mut(const AgentId& id) {
  auto it = accounts_.find(id);
  if (it == accounts_.end()) throw std::out_of_range("unknown agent '" + id + "'");
  return it->second;
}

const Account& Engine::account(const AgentId& id) const {
  auto it = accounts_.find(id);
  if (it == accounts_.end()) throw std::out_of_range("unknown agent '" + id + "'");
  return it->second;
}

void Engine::apply_position_change(Account& a, Side side, Qty q, Price price) {
  const Qty before = a.position;
  const Qty delta = signed_qty(side, q);
  const std::int64_t mult = config_.asset.multiplier;
  Qty closing = 0;
  if (before != 0 && ((before > 0) != (delta > 0))) closing = std::min(q, std::abs(before));
  if (closing > 0) {
    const double dir = before > 0 ? 1.0 : -1.0;
    a.realized_pnl += std::llround((static_cast<double>(price) - a.avg_entry) * dir *
                                   static_cast<double>(closing * mult * kCentsPerUnit));
    const Cents release =
        static_cast<Cents>(static_cast<__int128>(a.margin_posted) * closing / std::abs(before));
    a.margin_posted -= release;
  }
  const Qty opening = q - closing;
  a.position = before + delta;
  if (a.position == 0) {
    a.avg_entry = 0.0;
  } else if (opening > 0) {
    const Qty held = std::abs(before) - closing;
    a.avg_entry = (a.avg_entry * static_cast<double>(held) + static_cast<double>(price * opening)) /
                  static_cast<double>(held + opening);
  }
  a.basis += delta * price;
}

void Engine::fill(OrderRequest& o, Qty q, Price price) {
  Account& a = account_mut(o.agent);
  const Qty before = a.position;
  Qty closing = 0;
  if (before != 0 && ((before > 0) != (o.side == Side::Buy))) closing = std::min(q, std::abs(before));
  const Qty opening = q - closing;

  o.filled += q;
  o.status = o.residual() == 0 ? OrderStatus::Filled : OrderStatus::PartiallyFilled;

  // Release this fill's share of the reservation; the opening part moves into
  // posted margin, the closing part returns to available funds.
  const Cents after = margin_for(o.price, o.residual(), config_.asset.multiplier, initial_bp_);
  const Cents share = std::max<Cents>(o.reserved - after, 0);
  o.reserved -= share;
  a.reserved -= share;
  apply_position_change(a, o.side, q, price);
  a.margin_posted +=
      std::min(share, margin_for(o.price, opening, config_.asset.multiplier, initial_bp_));
}

Deal Engine::make_deal(const OrderRequest& buy, const OrderRequest& sell, Price price, Qty q,
                       bool forced) {
  Deal d;
  d.id = next_deal_id_++;
  d.buy_order = buy.id;
  d.sell_order = sell.id;
  d.buyer = buy.agent;
  d.seller = sell.agent;
  d.price = price;
  d.volume = q;
  d.frame = frame_;
  d.turn = forced ? 0 : turn_;
  d.forced_liquidation = forced;
  return d;
}

void Engine::record_deal(const Deal& d) { records_->append("deal", deal_to_json(d)); }

std::vector<Deal> Engine::match_turn() {
  if (phase_ != EnginePhase::Trading) throw PhaseError("match_turn: no turn open");
  std::vector<Deal> deals;
  auto& bids = book_.bids();
  auto& asks = book_.asks();
  while (!bids.empty() && !asks.empty()) {
    auto bl = bids.begin();
    auto al = asks.begin();
    if (bl->first < al->first) break;
    OrderRequest& b = order_mut(bl->second.front());
    OrderRequest& s = order_mut(al->second.front());
    const Price price = b.arrival < s.arrival ? b.price : s.price;
    const Qty q = std::min(b.residual(), s.residual());
    Deal d = make_deal(b, s, price, q, false);
    fill(b, q, price);
    fill(s, q, price);
    if (b.residual() == 0) {
      bl->second.pop_front();
      if (bl->second.empty()) bids.erase(bl);
    }
    if (s.residual() == 0) {
      al->second.pop_front();
      if (al->second.empty()) asks.erase(al);
    }
    last_price_ = price;
    record_deal(d);
    frame_deals_.push_back(d);
    deals.push_back(std::move(d));
  }
  phase_ = EnginePhase::TurnClosed;
  auto top = [](const auto& levels) { return levels.empty() ? ordered_json{} : ordered_json(levels.begin()->first); };
  records_->append("turn_closed", {{"frame", frame_},
                                   {"turn", turn_},
                                   {"deals", deals.size()},
                                   {"last_price", last_price_},
                                   {"best_bid", top(bids)},
                                   {"best_ask", top(asks)}});
  return deals;
}

void Engine::remove_from_book(OrderRequest& o, OrderStatus status, std::string_view reason) {
  book_.remove(o);
  const Qty residual = o.residual();
  Account& a = account_mut(o.agent);
  a.reserved -= o.reserved;
  o.reserved = 0;
  o.status = status;
  records_->append("withdrawal", {{"frame", frame_},
                                  {"turn", turn_},
                                  {"order", o.id},
                                  {"agent", o.agent},
                                  {"residual", residual},
                                  {"reason", reason}});
}

std::vector<WithdrawResult> Engine::withdraw_orders(const AgentId& caller, std::span<const OrderId> ids) {
  std::vector<WithdrawResult> out;
  out.reserve(ids.size());
  for (OrderId id : ids) {
    WithdrawResult r{id, WithdrawError::None, 0};
    auto it = orders_.find(id);
    if (it == orders_.end()) {
      r.error = WithdrawError::UnknownId;
    } else if (it->second.agent != caller) {
      r.error = WithdrawError::NotOwner;
    } else if (it->second.status == OrderStatus::Filled) {
      r.error = WithdrawError::AlreadyFilled;
    } else if (!is_active(it->second.status)) {
      r.error = WithdrawError::NotActive;
    } else {
      r.residual = it->second.residual();
      remove_from_book(it->second, OrderStatus::Withdrawn, "agent");
    }
    out.push_back(r);
  }
  return out;
}

std::vector<OrderId> Engine::resting_orders_of(const AgentId& agent) const {
  std::vector<OrderId> ids;
  for (OrderId id : book_.resting_ids())
    if (order(id).agent == agent) ids.push_back(id);
  return ids;
}

Qty Engine::open_interest() const noexcept {
  Qty oi = 0;
  for (const auto& [id, a] : accounts_)
    if (a.position > 0) oi += a.position;
  return oi;
}

Qty Engine::max_affordable(const AgentId& agent, Price price) const {
  return max_affordable_volume(account(agent).available(), price, config_.asset.multiplier, initial_bp_);
}

OrderRequest Engine::make_liquidation_order(const AgentId& agent, Side side, Price price, Qty q) {
  OrderRequest o;
  o.id = next_order_id_++;
  o.agent = agent;
  o.side = side;
  o.price = price;
  o.volume = q;
  o.frame = frame_;
  o.turn = 0;
  o.arrival = next_arrival_++;
  o.origin = OrderOrigin::Liquidation;
  o.status = OrderStatus::Resting;
  records_->append("order_accepted", {{"frame", frame_},
                                      {"turn", 0},
                                      {"origin", to_string(OrderOrigin::Liquidation)},
                                      {"order", order_to_json(o)}});
  return o;
}

namespace {

// Re-marks an account at `price`: returns the cash delta and resets basis.
Cents mark_to(Account& a, Price price, std::int64_t multiplier) {
  const std::int64_t diff = a.position * price - a.basis;
  a.basis = a.position * price;
  const Cents delta = diff * multiplier * kCentsPerUnit;
  a.cash += delta;
  return delta;
}

} // namespace

Qty Engine::liquidate_via_book(SettleContext& ctx, Account& acct, Side side, Qty q, Price settle) {
  Qty done = 0;
  const std::int64_t mult = config_.asset.multiplier;
  auto take = [&](auto& levels) {
    while (done < q && !levels.empty()) {
      auto lvl = levels.begin();
      OrderRequest& resting = order_mut(lvl->second.front());
      const Qty n = std::min(q - done, resting.residual());
      const Price price = resting.price;
      OrderRequest liq = make_liquidation_order(acct.agent, side, price, n);
      const Deal d = side == Side::Buy ? make_deal(liq, resting, price, n, true)
                                       : make_deal(resting, liq, price, n, true);
      fill(resting, n, price);
      fill(liq, n, price);
      if (resting.residual() == 0) {
        lvl->second.pop_front();
        if (lvl->second.empty()) levels.erase(lvl);
      }
      ctx.cash_delta[acct.agent] += mark_to(acct, settle, mult);
      Account& other = account_mut(resting.agent);
      ctx.cash_delta[other.agent] += mark_to(other, settle, mult);
      last_price_ = price;
      record_deal(d);
      auto& entry = ctx.liquidations[acct.agent];
      entry.agent = acct.agent;
      entry.volume += n;
      entry.via_book += n;
      entry.proceeds += price * n * mult * kCentsPerUnit;
      orders_.emplace(liq.id, std::move(liq));
      done += n;
    }
  };
  if (side == Side::Buy)
    take(book_.asks());
  else
    take(book_.bids());
  return done;
}

Qty Engine::liquidate_via_clearing(SettleContext& ctx, Account& acct, Side side, Qty q, Price settle) {
  // Auto-deleverage: opposite holders, largest position first, close at the
  // settlement price so no cash moves.
  std::vector<Account*> holders;
  for (auto& [id, a] : accounts_) {
    if (id == acct.agent) continue;
    if ((side == Side::Buy && a.position > 0) || (side == Side::Sell && a.position < 0))
      holders.push_back(&a);
  }
  std::sort(holders.begin(), holders.end(), [](const Account* x, const Account* y) {
    if (std::abs(x->position) != std::abs(y->position))
      return std::abs(x->position) > std::abs(y->position);
    return x->agent < y->agent;
  });
  const std::int64_t mult = config_.asset.multiplier;
  Qty done = 0;
  for (Account* h : holders) {
    if (done >= q) break;
    const Qty n = std::min(q - done, std::abs(h->position));
    OrderRequest mine = make_liquidation_order(acct.agent, side, settle, n);
    OrderRequest theirs = make_liquidation_order(h->agent, opposite(side), settle, n);
    const Deal d = side == Side::Buy ? make_deal(mine, theirs, settle, n, true)
                                     : make_deal(theirs, mine, settle, n, true);
    fill(mine, n, settle);
    fill(theirs, n, settle);
    ctx.cash_delta[acct.agent] += mark_to(acct, settle, mult);
    ctx.cash_delta[h->agent] += mark_to(*h, settle, mult);
    record_deal(d);
    auto& entry = ctx.liquidations[acct.agent];
    entry.agent = acct.agent;
    entry.volume += n;
    entry.via_clearing += n;
    entry.proceeds += settle * n * mult * kCentsPerUnit;
    orders_.emplace(mine.id, std::move(mine));
    orders_.emplace(theirs.id, std::move(theirs));
    done += n;
  }
  return done;
}

void Engine::liquidate(SettleContext& ctx, const AgentId& agent, Price settle) {
  Account& a = account_mut(agent);
  a.liquidation = true;
  for (OrderId id : resting_orders_of(agent)) remove_from_book(order_mut(id), OrderStatus::Withdrawn, "liquidation");

  const std::int64_t mult = config_.asset.multiplier;
  const Cents per_contract = margin_for(settle, 1, mult, initial_bp_);
  // Each pass either restores initial margin or closes more; worse book
  // prices can require another pass.
  for (int pass = 0; pass < 64 && a.position != 0; ++pass) {
    const Qty held = std::abs(a.position);
    if (a.cash >= margin_for(settle, held, mult, initial_bp_)) break;
    Qty keep = a.cash > 0 ? static_cast<Qty>(a.cash / per_contract) : 0;
    keep = std::min(keep, held - 1);
    const Qty q = held - keep;
    const Side side = a.position > 0 ? Side::Sell : Side::Buy;
    Qty done = liquidate_via_book(ctx, a, side, q, settle);
    if (done < q) done += liquidate_via_clearing(ctx, a, side, q - done, settle);
    if (done == 0) break;
  }
  if (a.position == 0 && a.cash < 0) {
    ctx.shortfalls.push_back({agent, a.cash});
    ctx.cash_delta[agent] += -a.cash;
    a.cash = 0;
  }
}

SettlementReport Engine::settle_frame() {
  if (phase_ != EnginePhase::TurnClosed || turn_ != config_.d_turn)
    throw PhaseError("settle_frame: trading phase of the frame is not complete");

  SettleContext ctx;
  const std::int64_t mult = config_.asset.multiplier;
  const Price settle = compute_settlement_price(frame_deals_, last_settlement_, config_.asset.tick);
  ctx.price = settle;

  if (config_.rules.fee_per_contract > 0) {
    for (const auto& d : frame_deals_) {
      for (const AgentId* who : {&d.buyer, &d.seller}) {
        const Cents fee = config_.rules.fee_per_contract * d.volume;
        account_mut(*who).cash -= fee;
        ctx.cash_delta[*who] -= fee;
        ctx.fees += fee;
      }
    }
  }

  // (1) mark to market
  for (auto& [id, a] : accounts_) ctx.cash_delta[id] += mark_to(a, settle, mult);

  // (2)-(3) margin calls, largest shortfall first; rescan after each
  // liquidation because counterparties' positions change.
  auto under_maintenance = [&](const Account& a) {
    if (a.position == 0) return a.cash < 0;
    return a.cash < margin_for(settle, std::abs(a.position), mult, maintenance_bp_);
  };
  const std::size_t max_rounds = accounts_.size() * 8 + 8;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    std::vector<const Account*> calls;
    for (const auto& [id, a] : accounts_)
      if (under_maintenance(a)) calls.push_back(&a);
    if (calls.empty()) break;
    auto shortfall = [&](const Account* a) {
      return margin_for(settle, std::abs(a->position), mult, initial_bp_) - a->cash;
    };
    const Account* worst = *std::min_element(calls.begin(), calls.end(), [&](auto* x, auto* y) {
      const Cents sx = shortfall(x), sy = shortfall(y);
      if (sx != sy) return sx > sy;
      return x->agent < y->agent;
    });
    liquidate(ctx, worst->agent, settle);
  }

  SettlementReport report;
  report.frame = frame_;
  report.price = settle;
  report.fees = ctx.fees;

  // auto-withdraw whatever is still resting
  for (OrderId id : book_.resting_ids()) {
    remove_from_book(order_mut(id), OrderStatus::Expired, "expired");
    report.expired.push_back(id);
  }

  Qty net = 0;
  Cents cash_sum = 0;
  for (auto& [id, a] : accounts_) {
    const Cents req = margin_for(settle, std::abs(a.position), mult, initial_bp_);
    a.margin_posted = std::min(req, std::max<Cents>(a.cash, 0));
    a.reserved = 0;
    a.unrealized_pnl = std::llround((static_cast<double>(settle) - a.avg_entry) *
                                    static_cast<double>(a.position * mult * kCentsPerUnit));
    net += a.position;
    const Cents delta = ctx.cash_delta[id];
    cash_sum += delta;
    report.deltas.push_back({id, delta, a.margin_posted, a.realized_pnl, a.unrealized_pnl});
    if (a.available() < 0) throw ConservationError("negative available funds for '" + id + "' after settlement");
  }
  Cents clearing = 0;
  for (const auto& s : ctx.shortfalls) clearing += s.clearing_delta;
  if (cash_sum + clearing + ctx.fees != 0)
    throw ConservationError("cash not conserved in frame " + std::to_string(frame_) + ": residual " +
                            std::to_string(cash_sum + clearing + ctx.fees));
  if (net != 0) throw ConservationError("positions not conserved in frame " + std::to_string(frame_));

  for (auto& [id, e] : ctx.liquidations) {
    records_->append("liquidation", {{"frame", frame_},
                                     {"agent", e.agent},
                                     {"volume", e.volume},
                                     {"proceeds", e.proceeds},
                                     {"via_book", e.via_book},
                                     {"via_clearing", e.via_clearing}});
    report.liquidations.push_back(e);
  }
  for (const auto& s : ctx.shortfalls)
    records_->append("shortfall", {{"frame", frame_}, {"agent", s.agent}, {"clearing_delta", s.clearing_delta}});
  report.shortfalls = ctx.shortfalls;

  last_settlement_ = settle;
  frame_deals_.clear();
  phase_ = EnginePhase::Idle;

  ordered_json deltas = ordered_json::array();
  for (const auto& d : report.deltas)
    deltas.push_back({{"agent", d.agent},
                      {"cash_delta", d.cash_delta},
                      {"margin", d.margin},
                      {"realized_pnl", d.realized_pnl},
                      {"unrealized_pnl", d.unrealized_pnl}});
  ordered_json accts = ordered_json::array();
  for (const auto& [id, a] : accounts_) accts.push_back(account_to_json(a));
  records_->append("settlement", {{"frame", frame_},
                                  {"price", settle},
                                  {"last_price", last_price_},
                                  {"open_interest", open_interest()},
                                  {"fees", ctx.fees},
                                  {"deltas", deltas},
                                  {"accounts", accts},
                                  {"expired", report.expired}});
  for (auto& [id, a] : accounts_) a.liquidation = false;
  return report;
}

MarketSnapshot Engine::snapshot_market() const {
  MarketSnapshot s;
  s.frame = frame_;
  s.turn = turn_;
  s.phase = phase_;
  s.last_price = last_price_;
  s.last_settlement = last_settlement_;
  auto level = [&](const auto& levels) -> std::optional<BookLevel> {
    if (levels.empty()) return std::nullopt;
    const auto& [price, ids] = *levels.begin();
    BookLevel l{price, 0, ids.size()};
    for (OrderId id : ids) l.volume += order(id).residual();
    return l;
  };
  s.best_bid = level(book_.bids());
  s.best_ask = level(book_.asks());
  s.open_interest = open_interest();
  for (const auto& id : config_.disclosure) s.disclosed_positions[id] = account(id).position;
  return s;
}

} // namespace mtsim
