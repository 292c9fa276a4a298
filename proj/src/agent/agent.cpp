#include "mtsim/agent/agent.hpp"

#include <algorithm>
#include <set>

namespace mtsim {

using nlohmann::json;
using nlohmann::ordered_json;
using llm::CallContext;
using llm::ChatMessage;
using llm::Schema;

std::string to_string(const Ablation& a) {
  if (a.no_expert && a.no_generator) return "both";
  if (a.no_expert) return "no_expert";
  if (a.no_generator) return "no_generator";
  return "none";
}

std::optional<Ablation> ablation_from_string(std::string_view s) {
  if (s == "none") return Ablation{};
  if (s == "no_expert") return Ablation{true, false};
  if (s == "no_generator") return Ablation{false, true};
  if (s == "both") return Ablation{true, true};
  return std::nullopt;
}

namespace {

double money(Cents c) { return static_cast<double>(c) / kCentsPerUnit; }

Tendency tendency_from(const json& v) {
  return {*direction_from_string(v.at("direction").get<std::string>()),
          *urgency_from_string(v.at("urgency").get<std::string>()), v.at("exposure").get<double>()};
}

std::string strategy_text(const TradingStrategy& s) {
  auto j = tendency_to_json(s.tendency);
  j["rationale"] = s.rationale;
  return j.dump();
}

} // namespace

std::string observation_text(const ObservationBundle& obs) {
  if (obs.items.empty()) return "(no news)";
  std::string out;
  for (const auto& n : obs.items) {
    if (!out.empty()) out += '\n';
    out += "- ";
    if (!n.broadcast()) out += "[private] ";
    out += n.text;
    if (!n.tags.empty()) {
      out += " (";
      for (std::size_t i = 0; i < n.tags.size(); ++i) out += (i ? ", " : "") + n.tags[i];
      out += ")";
    }
  }
  return out;
}

std::string market_text(const ObservationBundle& obs) {
  auto j = snapshot_to_json(obs.market);
  j["settlement_history"] = obs.settlements;
  return j.dump();
}

std::string account_text(const Account& a, std::optional<Qty> capacity) {
  ordered_json j{{"cash", money(a.cash)},
                 {"available", money(a.available())},
                 {"margin_posted", money(a.margin_posted)},
                 {"position", a.position},
                 {"average_entry", a.avg_entry},
                 {"unrealized_pnl", money(a.unrealized_pnl)}};
  if (capacity) j["max_affordable_volume"] = *capacity;
  return j.dump();
}

Agent::Agent(AgentProfile profile, const AgentServices& services, std::uint64_t seed)
    : profile_(std::move(profile)), services_(services), rng_(seed) {
  reflection_.agent = profile_.id;
  assessment_.agent = profile_.id;
  if (profile_.human_proxy) return;
  std::string knowledge;
  for (const auto& k : profile_.knowledge) knowledge += (knowledge.empty() ? "- " : "\n- ") + k;
  const auto& prompts = *services_.prompts;
  system_prompt_ = prompts.render(
      "system", {{"agent", profile_.id},
                 {"profile", profile_.persona.empty() ? "(none)" : profile_.persona},
                 {"style_guidance", prompts.raw("style_" + std::string(to_string(profile_.style)))},
                 {"knowledge", knowledge.empty() ? "(none)" : knowledge}});
}

std::string Agent::expert_id() const {
  return profile_.expert_backend.empty() ? services_.settings.expert_backend : profile_.expert_backend;
}

std::vector<ChatMessage> Agent::with_system(std::string user) const {
  return {{"system", system_prompt_}, {"user", std::move(user)}};
}

void Agent::trace(std::string_view kind, int frame, int turn, ordered_json fields) const {
  ordered_json ev{{"agent", profile_.id}, {"frame", frame}, {"turn", turn}, {"kind", kind}};
  for (auto& [k, v] : fields.items()) ev[k] = std::move(v);
  services_.records->append("agent_trace", std::move(ev));
}

void Agent::record_failure(const CallContext& ctx, const std::string& error) const {
  trace("failure", ctx.frame, ctx.turn, {{"stage", ctx.purpose}, {"error", error}});
}

void Agent::record_strategy(const TradingStrategy& s) const {
  ordered_json f = tendency_to_json(s.tendency);
  f["rationale"] = s.rationale;
  f["fallback"] = s.fallback;
  f["skipped"] = s.skipped;
  trace(s.stage == StrategyStage::Init ? "strategy_init" : "strategy_final", s.frame, s.turn, std::move(f));
}

Agent::Answer Agent::ask(std::vector<ChatMessage> messages, Schema schema, const CallContext& ctx) {
  Answer out;
  const auto& prompts = *services_.prompts;
  for (int attempt = 0; attempt <= services_.settings.parse_retries; ++attempt) {
    try {
      out.text = services_.gateway->complete(profile_.backend, messages, ctx,
                                             llm::SamplingParams{profile_.temperature, profile_.top_p});
    } catch (const llm::BackendFailure& e) {
      out.error = e.what();
      out.backend_failure = true;
      return out;
    }
    auto parsed = llm::parse_structured(out.text, schema);
    if (auto* v = std::get_if<json>(&parsed)) {
      out.value = std::move(*v);
      out.error.clear();
      return out;
    }
    out.error = std::get<llm::ParseError>(parsed).message;
    messages.push_back({"assistant", out.text});
    messages.push_back({"user", prompts.render("retry", {{"error", out.error}})});
  }
  return out;
}

MarketAssessment Agent::analyze(const ObservationBundle& obs) {
  MarketAssessment a;
  a.agent = profile_.id;
  a.frame = obs.frame;
  const auto& prompts = *services_.prompts;
  const std::string market = market_text(obs);
  CallContext ctx{profile_.id, obs.frame, 0, "analysis"};

  auto apply = [&a](const json& v) {
    a.trend = *trend_from_string(v.at("trend").get<std::string>());
    a.confidence = v.at("confidence").get<double>();
    a.analysis = v.value("analysis", std::string{});
  };

  auto draft = ask(with_system(prompts.render("analysis", {{"agent", profile_.id},
                                                           {"frame", std::to_string(obs.frame)},
                                                           {"d_sim", std::to_string(obs.d_sim)},
                                                           {"observation", observation_text(obs)},
                                                           {"market", market}})),
                   Schema::Assessment, ctx);
  if (!draft.value) {
    record_failure(ctx, draft.error);
    a.fallback = true;
  } else {
    apply(*draft.value);
    std::string reasoning = draft.text;
    const int iterations = services_.settings.ablation.no_expert ? 0 : services_.settings.expert_iterations;
    for (int i = 0; i < iterations; ++i) {
      CallContext ectx{profile_.id, obs.frame, 0, "expert_analysis"};
      std::string advice;
      try {
        advice = services_.gateway->consult_expert(expert_id(), prompts, "expert_analysis", reasoning, market, ectx);
      } catch (const llm::BackendFailure& e) {
        record_failure(ectx, e.what());
        break;
      }
      a.expert_advice.push_back(advice);
      CallContext rctx{profile_.id, obs.frame, 0, "analysis_revision"};
      auto rev = ask(with_system(prompts.render("analysis_revision", {{"agent", profile_.id},
                                                                      {"frame", std::to_string(obs.frame)},
                                                                      {"draft", reasoning},
                                                                      {"expert_advice", advice}})),
                     Schema::Assessment, rctx);
      if (!rev.value) {
        record_failure(rctx, rev.error);
        a.fallback = true;
        break;
      }
      apply(*rev.value);
      reasoning = rev.text;
    }
  }
  trace("assessment", obs.frame, 0,
        {{"trend", to_string(a.trend)},
         {"confidence", a.confidence},
         {"analysis", a.analysis},
         {"expert_advice", a.expert_advice},
         {"fallback", a.fallback}});
  assessment_ = a;
  strategies_.clear();
  return a;
}

TradingStrategy Agent::form_strategy(const Account& account, Qty capacity, const ObservationBundle& obs, int turn) {
  TradingStrategy s;
  s.agent = profile_.id;
  s.frame = obs.frame;
  s.turn = turn;
  s.stage = StrategyStage::Init;
  if (capacity <= 0 && account.position == 0) {
    s.rationale = kNoCapacity;
    s.skipped = true;
  } else {
    CallContext ctx{profile_.id, obs.frame, turn, "strategy"};
    ordered_json assessment{{"trend", to_string(assessment_.trend)},
                            {"confidence", assessment_.confidence},
                            {"analysis", assessment_.analysis}};
    auto ans = ask(with_system(services_.prompts->render("strategy", {{"agent", profile_.id},
                                                                      {"frame", std::to_string(obs.frame)},
                                                                      {"turn", std::to_string(turn)},
                                                                      {"account", account_text(account, capacity)},
                                                                      {"assessment", assessment.dump()},
                                                                      {"reflection", reflection_.prompt_text()},
                                                                      {"observation", observation_text(obs)},
                                                                      {"market", market_text(obs)}})),
                   Schema::Strategy, ctx);
    if (ans.value) {
      s.tendency = tendency_from(*ans.value);
      s.rationale = ans.value->value("rationale", std::string{});
    } else {
      record_failure(ctx, ans.error);
      s.fallback = true;
    }
  }
  record_strategy(s);
  strategies_.push_back(s);
  return s;
}

TradingStrategy Agent::refine_strategy(const TradingStrategy& init, const ObservationBundle& obs) {
  TradingStrategy s = init;
  s.stage = StrategyStage::Final;
  if (!services_.settings.ablation.no_expert && !init.skipped && !init.fallback) {
    const auto& prompts = *services_.prompts;
    CallContext ectx{profile_.id, init.frame, init.turn, "expert_strategy"};
    try {
      const std::string advice = services_.gateway->consult_expert(expert_id(), prompts, "expert_strategy",
                                                                   strategy_text(init), market_text(obs), ectx);
      CallContext ctx{profile_.id, init.frame, init.turn, "refinement"};
      auto ans = ask(with_system(prompts.render("refinement", {{"agent", profile_.id},
                                                               {"frame", std::to_string(init.frame)},
                                                               {"turn", std::to_string(init.turn)},
                                                               {"strategy", strategy_text(init)},
                                                               {"expert_advice", advice}})),
                     Schema::Strategy, ctx);
      if (ans.value) {
        s.tendency = blend_tendency(init.tendency, tendency_from(*ans.value), profile_.uptake);
        if (profile_.uptake > 0.0) s.rationale = ans.value->value("rationale", init.rationale);
      } else {
        record_failure(ctx, ans.error);
        s.fallback = true;
      }
    } catch (const llm::BackendFailure& e) {
      record_failure(ectx, e.what());
      s.fallback = true;
    }
  }
  record_strategy(s);
  strategies_.push_back(s);
  return s;
}

std::vector<OrderRequest> Agent::act(const TradingStrategy& fin, const Account& account, const ObservationBundle& obs,
                                     const EngineConfig& config) {
  std::vector<OrderRequest> orders;
  const Price m = obs.market.last_price;
  const bool direct = services_.settings.ablation.no_generator;
  bool fallback = false;
  if (fin.tendency.direction != Direction::Hold && m > 0) {
    if (!direct) {
      const MarginTerms terms{config.asset.tick, config.asset.multiplier, config.rules.initial_margin_bp()};
      orders = generate_orders(*services_.generator, fin.tendency, profile_.style, m, account.available(), terms,
                               rng_)
                   .orders;
    } else {
      CallContext ctx{profile_.id, fin.frame, fin.turn, "direct_order"};
      const Qty capacity = max_affordable_volume(account.available(), m, config.asset.multiplier,
                                                 config.rules.initial_margin_bp());
      auto ans = ask(with_system(services_.prompts->render("direct_order",
                                                           {{"agent", profile_.id},
                                                            {"frame", std::to_string(fin.frame)},
                                                            {"turn", std::to_string(fin.turn)},
                                                            {"strategy", strategy_text(fin)},
                                                            {"account", account_text(account, capacity)},
                                                            {"market", market_text(obs)}})),
                     Schema::DirectOrder, ctx);
      if (!ans.value) {
        record_failure(ctx, ans.error);
        fallback = true;
      } else {
        for (const auto& o : (*ans.value)["orders"]) {
          const double raw = o.contains("price") ? o["price"].get<double>()
                                                 : static_cast<double>(m) * (1.0 + o["price_offset"].get<double>());
          const Price p = round_to_tick_away(raw, config.asset.tick, static_cast<double>(m));
          if (p <= 0) continue;
          OrderRequest r;
          r.side = *side_from_string(o["side"].get<std::string>());
          r.price = p;
          r.volume = o["volume"].get<Qty>();
          orders.push_back(r);
        }
      }
    }
  }
  for (auto& o : orders) {
    o.agent = profile_.id;
    o.frame = fin.frame;
    o.turn = fin.turn;
  }
  ordered_json list = ordered_json::array();
  for (const auto& o : orders) list.push_back({{"side", to_string(o.side)}, {"price", o.price}, {"volume", o.volume}});
  trace("orders", fin.frame, fin.turn,
        {{"mode", direct ? "direct" : "generator"}, {"reference_price", m}, {"orders", list}, {"fallback", fallback}});
  return orders;
}

std::vector<OrderId> Agent::decide_withdraw(int frame, int turn, const std::vector<Deal>& own_deals,
                                            const std::vector<OrderRequest>& resting) {
  std::vector<OrderId> ids;
  if (resting.empty()) {
    trace("withdraw_decision", frame, turn, {{"withdraw", ids}, {"skipped", true}});
    return ids;
  }
  ordered_json fills = ordered_json::array();
  for (const auto& d : own_deals)
    fills.push_back({{"deal", d.id},
                     {"side", d.buyer == profile_.id ? "buy" : "sell"},
                     {"price", d.price},
                     {"volume", d.volume}});
  ordered_json rest = ordered_json::array();
  std::set<OrderId> own;
  for (const auto& o : resting) {
    own.insert(o.id);
    rest.push_back({{"id", o.id}, {"side", to_string(o.side)}, {"price", o.price}, {"residual", o.residual()}});
  }
  CallContext ctx{profile_.id, frame, turn, "withdraw"};
  auto ans = ask(with_system(services_.prompts->render("withdraw", {{"agent", profile_.id},
                                                                    {"frame", std::to_string(frame)},
                                                                    {"turn", std::to_string(turn)},
                                                                    {"feedback", fills.empty() ? "(no fills)" : fills.dump()},
                                                                    {"resting", rest.dump()}})),
                 Schema::WithdrawList, ctx);
  std::vector<OrderId> rejected;
  if (ans.value) {
    for (const auto& v : (*ans.value)["withdraw"]) {
      const auto id = v.get<OrderId>();
      if (own.contains(id) && std::find(ids.begin(), ids.end(), id) == ids.end())
        ids.push_back(id);
      else
        rejected.push_back(id);
    }
  } else {
    record_failure(ctx, ans.error);
  }
  trace("withdraw_decision", frame, turn,
        {{"withdraw", ids}, {"filtered", rejected}, {"skipped", false}, {"fallback", !ans.value}});
  return ids;
}

Reflection Agent::reflect(int frame, const std::vector<OrderRequest>& own_orders, const SettlementReport& report,
                          const Account& account) {
  Reflection r;
  r.agent = profile_.id;
  r.frame = frame;
  ordered_json strategies = ordered_json::array();
  for (const auto& s : strategies_) {
    if (s.stage != StrategyStage::Final) continue;
    auto j = tendency_to_json(s.tendency);
    j["turn"] = s.turn;
    strategies.push_back(std::move(j));
  }
  ordered_json orders = ordered_json::array();
  for (const auto& o : own_orders)
    orders.push_back({{"id", o.id},
                      {"turn", o.turn},
                      {"side", to_string(o.side)},
                      {"price", o.price},
                      {"volume", o.volume},
                      {"filled", o.filled},
                      {"status", to_string(o.status)}});
  ordered_json settlement{{"price", report.price}};
  for (const auto& d : report.deltas)
    if (d.agent == profile_.id) settlement["cash_delta"] = money(d.cash_delta);
  for (const auto& l : report.liquidations)
    if (l.agent == profile_.id) settlement["forced_liquidation_volume"] = l.volume;

  CallContext ctx{profile_.id, frame, 0, "reflection"};
  auto ans = ask(with_system(services_.prompts->render("reflection", {{"agent", profile_.id},
                                                                      {"frame", std::to_string(frame)},
                                                                      {"strategies", strategies.dump()},
                                                                      {"orders", orders.dump()},
                                                                      {"settlement", settlement.dump()},
                                                                      {"account", account_text(account, std::nullopt)}})),
                 Schema::Reflection, ctx);
  if (ans.value) {
    r.summary = (*ans.value)["summary"].get<std::string>();
    for (const auto& l : (*ans.value)["lessons"]) r.lessons.push_back({l["tag"], l["note"]});
  } else {
    record_failure(ctx, ans.error);
    r.fallback = true;
  }
  ordered_json lessons = ordered_json::array();
  for (const auto& l : r.lessons) lessons.push_back({{"tag", l.tag}, {"note", l.note}});
  trace("reflection", frame, 0, {{"summary", r.summary}, {"lessons", lessons}, {"fallback", r.fallback}});
  reflection_ = r;
  return r;
}

} // namespace mtsim
