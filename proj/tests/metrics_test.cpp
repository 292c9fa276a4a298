#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "mtsim/engine/engine.hpp"
#include "mtsim/metrics/metrics.hpp"
#include "mtsim/scenario/scenario.hpp"

using namespace mtsim;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot{MTSIM_SOURCE_DIR};

constexpr Cents units(std::int64_t u) { return u * kCentsPerUnit; }

EngineConfig small_config(int frames = 1) {
  EngineConfig c;
  c.asset.tick = 1;
  c.d_sim = frames;
  c.d_turn = 1;
  c.initial_price = 150;
  return c;
}

OrderRequest order(const char* agent, Side side, Price price, Qty volume) {
  OrderRequest o;
  o.agent = agent;
  o.side = side;
  o.price = price;
  o.volume = volume;
  return o;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mtsim_metrics_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<Record> flat_run() {
  auto run = prepare_run(load_scenario(kRoot / "tests/fixtures/flat.scenario.json"));
  run.simulation->run();
  return run.records->snapshot();
}

} // namespace

TEST(ReturnRateMse, HandArithmetic) {
  EXPECT_DOUBLE_EQ(return_rate_mse(100, {110, 105, 120}, {100, 100, 100}), (0.01 + 0.0025 + 0.04) / 3);
  EXPECT_NEAR(return_rate_mse(100, {110, 105, 120}, {100, 100, 100}), 0.0175, 1e-15);
  EXPECT_EQ(return_rate_mse(100, {110, 105, 120}, {110, 105, 120}), 0.0);
}

TEST(ReturnRateMse, Errors) {
  EXPECT_THROW(return_rate_mse(100, {1, 2}, {1}), std::invalid_argument);
  EXPECT_THROW(return_rate_mse(100, {}, {}), std::invalid_argument);
  EXPECT_THROW(return_rate_mse(0, {1}, {1}), std::invalid_argument);
  EXPECT_THROW(return_rate_mse(-5, {1}, {1}), std::invalid_argument);
}

TEST(ReturnRateMse, NonNegativeSymmetricZeroIffEqual) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> price(50, 150);
  for (int t = 0; t < 500; ++t) {
    const double s0 = price(rng);
    std::vector<double> a(3), b(3);
    for (auto& x : a) x = price(rng);
    for (auto& x : b) x = price(rng);
    const double l = return_rate_mse(s0, a, b);
    EXPECT_GE(l, 0.0);
    EXPECT_DOUBLE_EQ(l, return_rate_mse(s0, b, a));
    EXPECT_GT(l, 0.0);
    EXPECT_EQ(return_rate_mse(s0, a, a), 0.0);
  }
}

TEST(Growth, RelativeErrorAgainstReference) {
  const auto g = growth_between(100.0, 347.34, 2.8534);
  EXPECT_NEAR(g.increase, 2.4734, 1e-12);
  ASSERT_TRUE(g.relative_error);
  EXPECT_NEAR(*g.relative_error * 100, 13.3, 0.1);
  EXPECT_NEAR(relative_error(2.4734, 2.8534), 0.38 / 2.8534, 1e-12);
  EXPECT_THROW(growth_between(0.0, 1.0), std::invalid_argument);
}

TEST(Growth, FlatRunIsZero) {
  const auto records = flat_run();
  const auto g = growth_rate(records);
  EXPECT_EQ(g.increase, 0.0);
  EXPECT_EQ(settlement_series(records), (std::vector<double>{100, 100}));
}

TEST(PriceRanges, WeightedAverage) {
  Engine e(small_config(), {{"a", units(100000), 0}, {"b", units(100000), 0}});
  e.open_frame();
  e.open_turn();
  e.submit(order("a", Side::Buy, 100, 1));
  e.submit(order("a", Side::Buy, 200, 3));
  e.submit(order("b", Side::Sell, 300, 5));
  e.match_turn();
  e.settle_frame();
  const auto r = price_range_series(e.records().snapshot());
  ASSERT_EQ(r.bids.size(), 1u);
  EXPECT_TRUE(r.bids[0].present);
  EXPECT_EQ(r.bids[0].low, 100);
  EXPECT_EQ(r.bids[0].high, 200);
  EXPECT_DOUBLE_EQ(r.bids[0].avg, 175.0);
  EXPECT_EQ(r.bids[0].volume, 4);
  EXPECT_EQ(r.asks[0].low, 300);
  EXPECT_DOUBLE_EQ(r.asks[0].avg, 300.0);
  EXPECT_TRUE(bid_over_ask_rounds(r).empty());
}

TEST(PriceRanges, SingleBidAndEmptyRound) {
  Engine e(small_config(2), {{"a", units(100000), 0}, {"b", units(100000), 0}});
  e.open_frame();
  e.open_turn();
  e.submit(order("a", Side::Buy, 100, 5));
  e.match_turn();
  e.settle_frame();
  e.open_frame();
  e.open_turn();
  e.match_turn();
  e.settle_frame();
  const auto r = price_range_series(e.records().snapshot());
  ASSERT_EQ(r.bids.size(), 2u);
  EXPECT_EQ(r.bids[0].low, 100);
  EXPECT_EQ(r.bids[0].high, 100);
  EXPECT_DOUBLE_EQ(r.bids[0].avg, 100.0);
  EXPECT_FALSE(r.asks[0].present);
  EXPECT_FALSE(r.bids[1].present);
}

TEST(Liquidation, PlateauFromTwoEvents) {
  RecordSet rs;
  rs.append("engine_init", {{"config", small_config(3)},
                            {"accounts", {{{"agent", "t"}, {"cash", 0}, {"position", 0}}}}});
  rs.append("liquidation", {{"frame", 1}, {"agent", "t"}, {"volume", 1}, {"proceeds", 100'000'000'000}});
  rs.append("settlement", {{"frame", 1}, {"price", 150}, {"last_price", 150}, {"open_interest", 0}});
  rs.append("liquidation", {{"frame", 2}, {"agent", "t"}, {"volume", 1}, {"proceeds", 160'000'000'000}});
  rs.append("settlement", {{"frame", 2}, {"price", 150}, {"last_price", 150}, {"open_interest", 0}});
  rs.append("settlement", {{"frame", 3}, {"price", 150}, {"last_price", 150}, {"open_interest", 0}});
  const auto s = liquidation_series(rs.snapshot(), "t");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_DOUBLE_EQ(s[0].value, 1e9);
  EXPECT_DOUBLE_EQ(s[1].value, 2.6e9);
  EXPECT_DOUBLE_EQ(s[2].value, 2.6e9);
  EXPECT_EQ(first_liquidation_round(rs.snapshot(), "t"), 1);
  EXPECT_THROW(liquidation_series(rs.snapshot(), "nobody"), ConfigError);
}

TEST(Liquidation, NoneGivesZeros) {
  const auto records = flat_run();
  for (const auto& p : liquidation_series(records, "a")) EXPECT_EQ(p.value, 0.0);
  EXPECT_EQ(first_liquidation_round(records, "a"), 0);
}

TEST(BehaviourIndex, FullAffordableIsOneAndIdleIsZero) {
  Engine e(small_config(), {{"a", units(10000), 0}, {"b", units(1000000), 0}, {"c", units(500), 0}});
  const Qty n = e.max_affordable("a", 100);
  ASSERT_GT(n, 0);
  e.open_frame();
  e.open_turn();
  e.submit(order("a", Side::Buy, 100, n));
  e.submit(order("b", Side::Sell, 100, n));
  e.match_turn();
  e.settle_frame();
  const auto records = e.records().snapshot();
  const auto a = trading_behaviour_index(records, "a", 1);
  EXPECT_EQ(a.executed, n);
  EXPECT_EQ(a.affordable, n);
  EXPECT_DOUBLE_EQ(a.vwap, 100.0);
  EXPECT_DOUBLE_EQ(a.index, 1.0);

  const auto c = trading_behaviour_index(records, "c", 1);
  EXPECT_EQ(c.index, 0.0);
  EXPECT_TRUE(c.zero_capacity);
  EXPECT_THROW(trading_behaviour_index(records, "zz", 1), ConfigError);
}

// Aggressive agents turn over most of their capacity every round; the
// conservative one pulls back in round 5. Buy in turn 1, sell back in turn 2.
TEST(BehaviourIndex, StyleFixtureBands) {
  EngineConfig cfg = small_config(6);
  cfg.d_turn = 2;
  cfg.initial_price = 100;
  Engine e(cfg, {{"agg", units(20000), 0}, {"con", units(20000), 0}, {"mm", units(100'000'000), 0}});
  RecordSet& rs = e.records();
  rs.append("run_start", {{"roster",
                           {{{"id", "agg"}, {"style", "aggressive"}},
                            {{"id", "con"}, {"style", "conservative"}},
                            {{"id", "mm"}, {"style", "custom"}}}}});
  for (int f = 1; f <= 6; ++f) {
    e.open_frame();
    const Qty agg_q = e.max_affordable("agg", 100) * 45 / 100;
    const Qty con_q = e.max_affordable("con", 100) * (f == 5 ? 20 : 35) / 100;
    for (const Side side : {Side::Buy, Side::Sell}) {
      e.open_turn();
      const Side other = side == Side::Buy ? Side::Sell : Side::Buy;
      EXPECT_TRUE(e.submit(order("agg", side, 100, agg_q)).accepted);
      EXPECT_TRUE(e.submit(order("con", side, 100, con_q)).accepted);
      e.submit(order("mm", other, 100, agg_q + con_q));
      e.match_turn();
    }
    e.settle_frame();
  }
  const auto records = rs.snapshot();
  for (int r = 1; r <= 6; ++r) {
    SCOPED_TRACE(r);
    EXPECT_GT(*group_behaviour_index(records, "aggressive", r), 0.75);
    if (r == 5)
      EXPECT_LT(*group_behaviour_index(records, "conservative", r), 0.6);
    else
      EXPECT_GE(*group_behaviour_index(records, "conservative", r), 0.6);
  }
  EXPECT_FALSE(group_behaviour_index(records, "nobody", 1).has_value());
}

TEST(BehaviourIndex, AlwaysInUnitInterval) {
  auto run = prepare_run(load_scenario(kRoot / "scenarios/tsingshan.scenario.json"));
  run.simulation->run();
  const auto records = run.records->snapshot();
  for (int r = 1; r <= rounds_in(records); ++r)
    for (const auto& agent : {"glencore", "tsingshan", "fund_c1", "desk_x2"}) {
      const auto p = trading_behaviour_index(records, agent, r);
      EXPECT_GE(p.index, 0.0);
      EXPECT_LE(p.index, 1.0);
    }
  const auto liq = liquidation_series(records, "tsingshan");
  for (std::size_t i = 1; i < liq.size(); ++i) EXPECT_GE(liq[i].value, liq[i - 1].value);
  for (const auto& b : price_range_series(records).bids)
    if (b.present) {
      EXPECT_LE(b.low, b.avg);
      EXPECT_LE(b.avg, b.high);
    }
}

TEST(Contracts, CountsDealsAndForcedVolume) {
  Engine e(small_config(), {{"a", units(100000), 0}, {"b", units(100000), 0}});
  e.open_frame();
  e.open_turn();
  e.submit(order("a", Side::Buy, 150, 3));
  e.submit(order("b", Side::Sell, 150, 2));
  e.match_turn();
  e.settle_frame();
  const auto c = completed_contracts(e.records().snapshot());
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].volume, 2);
  EXPECT_EQ(c[0].forced_volume, 0);
  EXPECT_EQ(c[0].deals, 1u);
}

TEST(Export, EmptyLogGivesHeadersOnly) {
  const auto dir = temp_dir("empty");
  export_tables({}, dir);
  EXPECT_EQ(read(dir / "settlements.csv"), "round,price,last_price,open_interest\n");
  EXPECT_EQ(read(dir / "contracts.csv"), "round,volume,forced_volume,deals\n");
  EXPECT_EQ(read(dir / "liquidation.csv"), "round,agent,cumulative_value\n");
  EXPECT_EQ(read(dir / "price_ranges.csv"),
            "round,bid_low,bid_high,bid_avg,bid_volume,ask_low,ask_high,ask_avg,ask_volume\n");
  EXPECT_EQ(read(dir / "behaviour_groups.csv"), "round,aggressive,conservative,custom\n");
}

TEST(Export, ReExportIsByteIdenticalAndMatchesPersistedLog) {
  auto run = prepare_run(load_scenario(kRoot / "scenarios/normal/ta501.scenario.json"));
  run.simulation->run();
  const auto records = run.records->snapshot();
  const auto a = temp_dir("a"), b = temp_dir("b");
  const auto sa = export_tables(records, a, {"agg_1", std::nullopt});

  std::istringstream jsonl(run.records->to_jsonl());
  const auto loaded = load_jsonl(jsonl);
  ASSERT_EQ(loaded.bad_line, 0u);
  const auto sb = export_tables(loaded.events, b, {"agg_1", std::nullopt});
  EXPECT_EQ(sa, sb);
  for (const char* f : {"settlements.csv", "price_ranges.csv", "contracts.csv", "behaviour_index.csv",
                        "behaviour_groups.csv", "liquidation.csv", "summary.json"}) {
    SCOPED_TRACE(f);
    EXPECT_EQ(read(a / f), read(b / f));
    EXPECT_FALSE(read(a / f).empty());
  }
}
