#include <gtest/gtest.h>

#include "mtsim/agent/simulation.hpp"

using namespace mtsim;
using nlohmann::json;

namespace {

constexpr Cents units(std::int64_t u) { return u * kCentsPerUnit; }

std::string block(const json& j) { return "```json\n" + j.dump() + "\n```"; }

json strategy(const char* dir, const char* urg, double exposure, const char* why = "plan") {
  return {{"direction", dir}, {"urgency", urg}, {"exposure", exposure}, {"rationale", why}};
}

// bulls buy, bears sell, everyone else holds
json foundation_script() {
  return {{"rules",
           {{{"purpose", {"analysis", "analysis_revision"}},
             {"contains", "WAR"},
             {"response", block({{"trend", "strong_up"}, {"confidence", 0.9}, {"analysis", "supply shock"}})}},
            {{"purpose", "analysis_revision"},
             {"contains", "supply shock"},
             {"response", block({{"trend", "strong_up"}, {"confidence", 0.9}, {"analysis", "supply shock"}})}},
            {{"purpose", {"analysis", "analysis_revision"}},
             {"response", block({{"trend", "flat"}, {"confidence", 0.5}, {"analysis", "quiet"}})}},
            {{"purpose", {"strategy", "refinement"}},
             {"agent", {"bull1", "bull2"}},
             {"response", block(strategy("buy", "high", 0.8))}},
            {{"purpose", {"strategy", "refinement"}},
             {"agent", {"bear1", "bear2"}},
             {"response", block(strategy("sell", "high", 0.8))}},
            {{"purpose", {"strategy", "refinement"}}, {"response", block(strategy("hold", "low", 0.0))}},
            {{"purpose", "withdraw"}, {"response", block({{"withdraw", json::array()}})}},
            {{"purpose", "direct_order"},
             {"response", block({{"orders", {{{"side", "buy"}, {"price_offset", 0.05}, {"volume", 1}}}}})}},
            {{"purpose", "reflection"},
             {"response", block({{"summary", "kept exposure in check"},
                                 {"lessons", {{{"tag", "risk"}, {"note", "size down after losses"}}}}})}}}}};
}

json expert_script() { return {{"rules", json::array()}, {"default", "Watch inventories closely."}}; }

GeneratorModel simple_model() {
  GeneratorModel m;
  m.k = 5;
  for (auto& d : m.directions) d = {0.01, 0.005, {0}};
  return m;
}

struct Harness {
  std::shared_ptr<RecordSet> records = std::make_shared<RecordSet>();
  std::shared_ptr<llm::Gateway> gateway = std::make_shared<llm::Gateway>(records);
  SimulationConfig cfg;

  explicit Harness(json foundation = foundation_script(), json expert = expert_script()) {
    cfg.name = "test";
    cfg.engine.asset.tick = 1;
    cfg.engine.d_sim = 3;
    cfg.engine.d_turn = 2;
    cfg.engine.initial_price = 1000;
    cfg.generator = simple_model();
    for (const char* id : {"bull1", "bear1", "bull2", "bear2", "idle"}) {
      AgentProfile p;
      p.id = id;
      p.persona = std::string("trader ") + id;
      p.style = std::string(id).starts_with("bull") ? Style::Aggressive : Style::Conservative;
      cfg.roster.push_back({p, {id, units(1'000'000), 0}});
    }
    add_backend("foundation", std::move(foundation));
    add_backend("expert", std::move(expert));
  }

  void add_backend(const std::string& id, json script) {
    llm::BackendSpec s;
    s.id = id;
    s.inline_script = script;
    gateway->register_backend(s, llm::ScriptedBackend::from_json(script));
  }

  std::unique_ptr<Simulation> make() {
    return std::make_unique<Simulation>(cfg, gateway, llm::PromptSet::builtin(), records);
  }

  std::vector<Record> events(const std::string& type, const std::string& kind = "") const {
    std::vector<Record> out;
    for (const auto& e : records->snapshot())
      if (e["type"] == type && (kind.empty() || e.value("kind", "") == kind)) out.push_back(e);
    return out;
  }
};

} // namespace

TEST(Blend, ZeroUptakeIsIdentityAndFullUptakeFollowsExpert) {
  const Tendency init{Direction::Buy, Urgency::Mid, 0.4};
  const Tendency expert{Direction::StrongSell, Urgency::High, 1.0};
  EXPECT_EQ(blend_tendency(init, expert, 0.0), init);
  EXPECT_EQ(blend_tendency(init, expert, 1.0), expert);
  const auto half = blend_tendency(init, expert, 0.5);
  // 0.5 * 1 + 0.5 * -2 = -0.5 rounds away from zero
  EXPECT_EQ(half.direction, Direction::Sell);
  EXPECT_EQ(half.urgency, Urgency::High);
  EXPECT_DOUBLE_EQ(half.exposure, 0.7);
}

TEST(Simulation, FullLoopCounts) {
  Harness h;
  h.cfg.engine.d_sim = 10;
  h.cfg.engine.d_turn = 4;
  auto sim = h.make();
  EXPECT_EQ(sim->run(), RunOutcome::Finished);
  EXPECT_EQ(h.events("settlement").size(), 10u);
  EXPECT_LE(h.events("turn_closed").size(), 40u);
  EXPECT_EQ(h.events("agent_trace", "reflection").size(), 50u);
  EXPECT_EQ(h.events("agent_trace", "assessment").size(), 50u);
  EXPECT_EQ(h.events("agent_trace", "strategy_final").size(), 200u);
  EXPECT_FALSE(h.events("deal").empty());
  EXPECT_EQ(h.events("run_end").back()["status"], "finished");
}

TEST(Simulation, AllHoldGivesNoDealsAndCarriesPrice) {
  // drop the bull and bear rules
  json f = foundation_script();
  f["rules"].erase(3);
  f["rules"].erase(3);
  Harness h(f);
  h.cfg.engine.d_sim = 1;
  h.cfg.engine.d_turn = 1;
  auto sim = h.make();
  sim->run();
  EXPECT_TRUE(h.events("deal").empty());
  ASSERT_EQ(h.events("settlement").size(), 1u);
  EXPECT_EQ(h.events("settlement")[0]["price"], 1000);
}

TEST(Simulation, DeterministicRunsAreByteIdentical) {
  auto once = [] {
    Harness h;
    h.cfg.seed = 99;
    h.make()->run();
    return h.records->to_jsonl();
  };
  const auto a = once();
  EXPECT_EQ(a, once());
  EXPECT_NE(a.find("\"type\":\"deal\""), std::string::npos);
}

TEST(Simulation, ConcurrentModeKeepsInvariants) {
  Harness h;
  h.cfg.deterministic = false;
  h.make()->run();
  EXPECT_EQ(h.events("settlement").size(), 3u);
  EXPECT_EQ(h.events("agent_trace", "reflection").size(), 15u);
}

TEST(Analysis, BullishNewsAndEmptyNews) {
  Harness h;
  h.cfg.news.push_back({2, {}, "WAR breaks out near a major producer", {"geopolitics"}});
  h.make()->run();
  for (const auto& a : h.events("agent_trace", "assessment")) {
    if (a["frame"] == 2)
      EXPECT_EQ(a["trend"], "strong_up");
    else
      EXPECT_EQ(a["trend"], "flat");
    EXPECT_EQ(a["fallback"], false);
    EXPECT_EQ(a["expert_advice"].size(), 2u);
  }
  const auto news = h.events("news_event");
  ASSERT_EQ(news.size(), 1u);
  EXPECT_EQ(news[0]["frame"], 2);
  EXPECT_EQ(news[0]["delivered_to"].size(), 5u);
}

TEST(Analysis, ParseRetriesThenFlatFallback) {
  json f = foundation_script();
  f["rules"][0] = {{"purpose", "analysis"}, {"response", "I think prices will rise."}};
  f["rules"][1] = {{"purpose", "analysis_revision"}, {"response", "nope"}};
  f["rules"][2] = {{"purpose", "analysis_revision"}, {"response", "nope"}};
  Harness h(f);
  h.cfg.engine.d_sim = 1;
  h.make()->run();
  const auto a = h.events("agent_trace", "assessment");
  ASSERT_EQ(a.size(), 5u);
  EXPECT_EQ(a[0]["trend"], "flat");
  EXPECT_EQ(a[0]["confidence"], 0.0);
  EXPECT_EQ(a[0]["fallback"], true);
  // 1 + 3 retries per agent, the retry prompt echoes the validator message
  int analysis_calls = 0;
  for (const auto& e : h.events("agent_trace", "exchange"))
    if (e["purpose"] == "analysis") {
      ++analysis_calls;
      if (e["messages"].size() > 2)
        EXPECT_NE(e["messages"].back()["content"].get<std::string>().find("fenced"), std::string::npos);
    }
  EXPECT_EQ(analysis_calls, 5 * 4);
}

TEST(Ablation, NoExpertMakesFinalEqualInitAndSkipsExpert) {
  Harness h;
  h.cfg.agent.ablation.no_expert = true;
  h.make()->run();
  for (const auto& e : h.events("agent_trace", "exchange")) {
    EXPECT_NE(e["backend"], "expert");
    EXPECT_NE(e["purpose"], "refinement");
  }
  const auto init = h.events("agent_trace", "strategy_init");
  const auto fin = h.events("agent_trace", "strategy_final");
  ASSERT_EQ(init.size(), fin.size());
  for (std::size_t i = 0; i < init.size(); ++i)
    for (const char* k : {"agent", "frame", "turn", "direction", "urgency", "exposure", "rationale"})
      EXPECT_EQ(init[i][k], fin[i][k]);
}

TEST(Ablation, NoGeneratorOrdersAtFivePercentAboveMarket) {
  Harness h;
  h.cfg.agent.ablation.no_generator = true;
  h.cfg.engine.d_sim = 1;
  h.cfg.engine.d_turn = 1;
  h.cfg.engine.asset.tick = 10;
  h.cfg.engine.initial_price = 29000;
  h.make()->run();
  const auto orders = h.events("agent_trace", "orders");
  int n = 0;
  for (const auto& o : orders) {
    EXPECT_EQ(o["mode"], "direct");
    for (const auto& x : o["orders"]) {
      EXPECT_EQ(x["price"], 30450);
      ++n;
    }
  }
  EXPECT_EQ(n, 4);
}

TEST(Strategy, ZeroCashFlatHoldsWithoutCallingModel) {
  Harness h;
  h.cfg.roster[4].account.cash = 0;
  h.cfg.engine.d_sim = 1;
  h.make()->run();
  for (const auto& e : h.events("agent_trace", "exchange"))
    if (e["agent"] == "idle") EXPECT_NE(e["purpose"], "strategy");
  for (const auto& s : h.events("agent_trace", "strategy_init"))
    if (s["agent"] == "idle") {
      EXPECT_EQ(s["direction"], "hold");
      EXPECT_EQ(s["skipped"], true);
    }
}

TEST(Strategy, ReflectionOfPreviousFrameIsInPrompt) {
  Harness h;
  h.make()->run();
  bool seen_frame2 = false;
  for (const auto& e : h.events("agent_trace", "exchange")) {
    if (e["purpose"] != "strategy") continue;
    const std::string prompt = e["messages"][1]["content"];
    if (e["frame"] == 1) EXPECT_NE(prompt.find("Reflection on the previous frame:\n(none)"), std::string::npos);
    if (e["frame"] == 2) {
      seen_frame2 = true;
      EXPECT_NE(prompt.find("kept exposure in check\n- risk: size down after losses"), std::string::npos);
    }
  }
  EXPECT_TRUE(seen_frame2);
}

TEST(Strategy, AggressiveProfileCarriesStyleContract) {
  Harness h;
  h.cfg.engine.d_sim = 1;
  h.make()->run();
  for (const auto& e : h.events("agent_trace", "exchange")) {
    if (e["agent"] != "bull1" || e["backend"] != "foundation") continue;
    EXPECT_NE(e["messages"][0]["content"].get<std::string>().find("exposure above 0.75"), std::string::npos);
  }
}

TEST(Refinement, UptakeControlsExpertInfluence) {
  json f = foundation_script();
  // the refinement reply always reverses to strong_sell
  const json rule = {{"purpose", "refinement"}, {"response", block(strategy("strong_sell", "low", 0.2, "reverse"))}};
  f["rules"].insert(f["rules"].begin(), rule);
  for (double uptake : {0.0, 1.0}) {
    Harness h(f);
    h.cfg.engine.d_sim = 1;
    h.cfg.engine.d_turn = 1;
    for (auto& r : h.cfg.roster) r.profile.uptake = uptake;
    h.make()->run();
    for (const auto& s : h.events("agent_trace", "strategy_final")) {
      if (s["agent"] != "bull1") continue;
      EXPECT_EQ(s["direction"], uptake == 0.0 ? "buy" : "strong_sell");
    }
  }
}

TEST(Refinement, ExpertAdviceReachesRefinementPrompt) {
  Harness h(foundation_script(), {{"rules", {{{"purpose", "expert_strategy"}, {"response", "BID-HIGHER-HINT"}}}},
                                  {"default", "generic"}});
  h.cfg.engine.d_sim = 1;
  h.make()->run();
  bool found = false;
  for (const auto& e : h.events("agent_trace", "exchange"))
    if (e["purpose"] == "refinement")
      found |= e["messages"][1]["content"].get<std::string>().find("BID-HIGHER-HINT") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Act, HoldGivesNoOrdersAndBuysRespectCapacity) {
  Harness h;
  h.cfg.engine.d_sim = 1;
  auto sim = h.make();
  auto* bull = sim->agent("bull1");
  ObservationBundle obs;
  obs.frame = 1;
  obs.market.last_price = 1000;
  Account acct;
  acct.agent = "bull1";
  // 100 contracts at the market price
  acct.cash = margin_for(1000, 100, 1, 1250);
  TradingStrategy s;
  s.frame = 1;
  s.turn = 1;
  s.stage = StrategyStage::Final;
  EXPECT_TRUE(bull->act(s, acct, obs, h.cfg.engine).empty());
  s.tendency = {Direction::StrongBuy, Urgency::High, 1.0};
  for (int i = 0; i < 200; ++i) {
    Qty total = 0;
    for (const auto& o : bull->act(s, acct, obs, h.cfg.engine)) {
      EXPECT_EQ(o.side, Side::Buy);
      total += o.volume;
    }
    EXPECT_LE(total, 100);
  }
}

TEST(Withdraw, SkipsWhenNothingRestsAndFiltersForeignIds) {
  json f = foundation_script();
  const json rule = {{"purpose", "withdraw"}, {"response", block({{"withdraw", {7, 999, 7}}})}};
  f["rules"].insert(f["rules"].begin(), rule);
  Harness h(f);
  auto sim = h.make();
  auto* a = sim->agent("bull1");
  EXPECT_TRUE(a->decide_withdraw(1, 1, {}, {}).empty());
  EXPECT_TRUE(h.events("agent_trace", "exchange").empty());
  OrderRequest stale;
  stale.id = 7;
  stale.agent = "bull1";
  stale.price = 1;
  stale.volume = 3;
  auto ids = a->decide_withdraw(1, 1, {}, {stale});
  EXPECT_EQ(ids, std::vector<OrderId>{7});
  const auto d = h.events("agent_trace", "withdraw_decision").back();
  EXPECT_EQ(d["filtered"], json({999, 7}));
}

TEST(Reflection, OnePerAgentPerFrameWithLessons) {
  Harness h;
  h.make()->run();
  const auto r = h.events("agent_trace", "reflection");
  ASSERT_EQ(r.size(), 15u);
  for (const auto& x : r) EXPECT_FALSE(x["lessons"].empty());
}

TEST(Liveness, AlwaysFailingBackendsTerminateWithHolds) {
  json fail = {{"rules", {{{"fail", true}}}}};
  Harness h(fail, fail);
  h.cfg.engine.d_sim = 4;
  h.cfg.engine.d_turn = 3;
  h.make()->run();
  EXPECT_EQ(h.events("run_end").size(), 1u);
  EXPECT_EQ(h.events("settlement").size(), 4u);
  EXPECT_TRUE(h.events("order_accepted").empty());
  for (const auto& s : h.events("agent_trace", "strategy_final")) EXPECT_EQ(s["direction"], "hold");
  // analysis + strategy per agent-turn + reflection, no retries on hard failures
  const std::size_t bound = 5 * 4 * (1 + 3 * 1 + 1);
  EXPECT_LE(h.events("agent_trace", "exchange").size(), bound);
  EXPECT_FALSE(h.events("agent_trace", "failure").empty());
}

TEST(HumanProxy, NoModelCallsAndOrdersFlowThroughWindow) {
  Harness h;
  AgentProfile human;
  human.id = "operator";
  human.human_proxy = true;
  h.cfg.roster.push_back({human, {"operator", units(1'000'000), 0}});
  h.cfg.engine.d_sim = 1;
  h.cfg.engine.d_turn = 1;
  auto sim = h.make();
  SimulationHooks hooks;
  hooks.trading_window = [](Engine& e, int frame, int turn) {
    OrderRequest o;
    o.agent = "operator";
    o.side = Side::Sell;
    o.price = 900;
    o.volume = 5;
    o.frame = frame;
    o.turn = turn;
    EXPECT_TRUE(e.submit(o, OrderOrigin::Human).accepted);
  };
  sim->run(hooks);
  for (const auto& e : h.events("agent_trace")) EXPECT_NE(e["agent"], "operator");
  bool human_dealt = false;
  for (const auto& d : h.events("deal")) human_dealt |= d["seller"] == "operator";
  EXPECT_TRUE(human_dealt);
}

TEST(Events, TargetingAndLateness) {
  Harness h;
  auto sim = h.make();
  EXPECT_TRUE(sim->inject_event({2, {"bear1"}, "PRIVATE-TIP", {}}));
  EXPECT_THROW(sim->inject_event({2, {"nobody"}, "x", {}}), ConfigError);
  EXPECT_THROW(sim->inject_event({99, {}, "x", {}}), ConfigError);
  SimulationHooks hooks;
  bool late_checked = false;
  hooks.before_turn = [&](int frame, int turn) {
    if (frame == 2 && turn == 2) EXPECT_FALSE(sim->inject_event({2, {}, "MIDFRAME-FLASH", {}}));
    return true;
  };
  hooks.frame_settled = [&](const SettlementReport& r) {
    if (r.frame == 2) {
      EXPECT_THROW(sim->inject_event({2, {}, "too late", {}}), LateEventError);
      late_checked = true;
    }
  };
  sim->run(hooks);
  EXPECT_TRUE(late_checked);
  for (const auto& e : h.events("agent_trace", "exchange")) {
    const std::string all = e["messages"].dump();
    const bool tip = all.find("PRIVATE-TIP") != std::string::npos;
    if (tip) EXPECT_EQ(e["agent"], "bear1");
    if (e["purpose"] == "strategy" && e["frame"] == 2 && e["turn"] == 2)
      EXPECT_NE(all.find("MIDFRAME-FLASH"), std::string::npos);
  }
  const auto news = h.events("news_event");
  ASSERT_EQ(news.size(), 2u);
  EXPECT_EQ(news[1]["turn"], 2);
}

TEST(Invariants, PhaseOrderingPerAgentAndFrame) {
  Harness h;
  h.make()->run();
  std::map<std::pair<std::string, int>, std::vector<std::pair<std::string, std::uint64_t>>> seen;
  std::map<int, std::uint64_t> settlement_seq;
  for (const auto& e : h.records->snapshot()) {
    const auto seq = e["seq"].get<std::uint64_t>();
    if (e["type"] == "settlement") settlement_seq[e["frame"]] = seq;
    if (e["type"] == "agent_trace" && e["kind"] != "exchange")
      seen[{e["agent"], e["frame"]}].push_back({e["kind"], seq});
    if (e["type"] == "order_accepted") seen[{e["order"]["agent"], e["frame"]}].push_back({"accepted", seq});
  }
  for (const auto& [key, list] : seen) {
    std::uint64_t assess = 0, reflect = 0, last_strategy = 0, first_order = UINT64_MAX, last_order = 0;
    for (const auto& [kind, seq] : list) {
      if (kind == "assessment") assess = seq;
      if (kind == "reflection") reflect = seq;
      if (kind.starts_with("strategy")) last_strategy = std::max(last_strategy, seq);
      if (kind == "accepted") first_order = std::min(first_order, seq), last_order = std::max(last_order, seq);
    }
    const auto settle = settlement_seq.at(key.second);
    EXPECT_LT(assess, last_strategy);
    EXPECT_LT(last_order, settle);
    EXPECT_LT(settle, reflect);
    if (first_order != UINT64_MAX) EXPECT_GT(first_order, assess);
  }
}
