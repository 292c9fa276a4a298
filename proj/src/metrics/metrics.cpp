#include "mtsim/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mtsim/engine/account.hpp"
#include "mtsim/engine/config.hpp"

namespace mtsim {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

double return_rate_mse(double s0, const std::vector<double>& actual, const std::vector<double>& predicted) {
  if (actual.size() != predicted.size())
    throw std::invalid_argument("return_rate_mse: " + std::to_string(actual.size()) + " actual vs " +
                                std::to_string(predicted.size()) + " predicted prices");
  if (actual.empty()) throw std::invalid_argument("return_rate_mse: no prices");
  if (!(s0 > 0.0)) throw std::invalid_argument("return_rate_mse: s0 must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double y = (actual[i] - s0) / s0;
    const double yh = (predicted[i] - s0) / s0;
    sum += (y - yh) * (y - yh);
  }
  return sum / static_cast<double>(actual.size());
}

double relative_error(double sim, double ref) {
  if (ref == 0.0) throw std::invalid_argument("relative_error: zero reference");
  return std::abs(sim - ref) / std::abs(ref);
}

GrowthReport growth_between(double first, double last, std::optional<double> reference) {
  if (first == 0.0) throw std::invalid_argument("growth_rate: zero first price");
  GrowthReport g;
  g.first = first;
  g.last = last;
  g.increase = (last - first) / first;
  g.reference = reference;
  if (reference) g.relative_error = relative_error(g.increase, *reference);
  return g;
}

namespace {

const Record* find_first(const std::vector<Record>& records, std::string_view type) {
  for (const auto& r : records)
    if (r.at("type").get_ref<const std::string&>() == type) return &r;
  return nullptr;
}

bool is(const Record& r, std::string_view type) { return r.at("type").get_ref<const std::string&>() == type; }

EngineConfig engine_config(const std::vector<Record>& records) {
  const Record* init = find_first(records, "engine_init");
  if (!init) throw ConfigError("log has no engine_init event");
  EngineConfig c;
  from_json(init->at("config"), c);
  return c;
}

std::set<AgentId> known_agents(const std::vector<Record>& records) {
  std::set<AgentId> out;
  if (const Record* init = find_first(records, "engine_init"))
    for (const auto& a : init->at("accounts")) out.insert(a.at("agent").get<std::string>());
  return out;
}

struct StartAccount {
  Cents available{0};
  Qty position{0};
};

StartAccount round_start(const std::vector<Record>& records, const EngineConfig& cfg, const AgentId& agent,
                         int round) {
  if (round > 1) {
    for (const auto& r : records) {
      if (!is(r, "settlement") || r.at("frame").get<int>() != round - 1) continue;
      for (const auto& a : r.at("accounts")) {
        if (a.at("agent").get<std::string>() != agent) continue;
        return {a.at("cash").get<Cents>() - a.at("margin").get<Cents>() - a.at("reserved").get<Cents>(),
                a.at("position").get<Qty>()};
      }
    }
    throw ConfigError("no settlement for round " + std::to_string(round - 1));
  }
  const Record* init = find_first(records, "engine_init");
  for (const auto& a : init->at("accounts")) {
    if (a.at("agent").get<std::string>() != agent) continue;
    const Cents cash = a.at("cash").get<Cents>();
    const Qty pos = a.at("position").get<Qty>();
    const Cents margin = std::min(
        margin_for(cfg.initial_price, std::abs(pos), cfg.asset.multiplier, cfg.rules.initial_margin_bp()), cash);
    return {cash - margin, pos};
  }
  throw ConfigError("unknown agent '" + agent + "'");
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::map<std::string, std::string> roster_styles(const std::vector<Record>& records) {
  std::map<std::string, std::string> out;
  if (const Record* start = find_first(records, "run_start"))
    for (const auto& p : start->at("roster"))
      if (!p.value("human_proxy", false)) out[p.at("id").get<std::string>()] = p.at("style").get<std::string>();
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace

int rounds_in(const std::vector<Record>& records) {
  int n = 0;
  for (const auto& r : records)
    if (is(r, "settlement")) n = std::max(n, r.at("frame").get<int>());
  return n;
}

std::vector<double> settlement_series(const std::vector<Record>& records) {
  std::vector<double> out;
  for (const auto& r : records)
    if (is(r, "settlement")) out.push_back(r.at("price").get<double>());
  return out;
}

GrowthReport growth_rate(const std::vector<Record>& records, std::optional<double> reference) {
  const auto cfg = engine_config(records);
  const auto s = settlement_series(records);
  const double first = static_cast<double>(cfg.initial_price);
  return growth_between(first, s.empty() ? first : s.back(), reference);
}

PriceRanges price_range_series(const std::vector<Record>& records) {
  const int rounds = rounds_in(records);
  PriceRanges out;
  for (int r = 1; r <= rounds; ++r) {
    out.bids.push_back({r});
    out.asks.push_back({r});
  }
  std::vector<double> bid_notional(rounds, 0.0), ask_notional(rounds, 0.0);
  for (const auto& r : records) {
    if (!is(r, "order_accepted") || r.at("origin").get<std::string>() == "liquidation") continue;
    const auto& o = r.at("order");
    const int round = o.at("frame").get<int>();
    if (round < 1 || round > rounds) continue;
    const bool buy = o.at("side").get<std::string>() == "buy";
    auto& p = (buy ? out.bids : out.asks)[round - 1];
    auto& notional = (buy ? bid_notional : ask_notional)[round - 1];
    const Price price = o.at("price").get<Price>();
    const Qty vol = o.at("volume").get<Qty>();
    if (!p.present) {
      p.present = true;
      p.low = p.high = price;
    }
    p.low = std::min(p.low, price);
    p.high = std::max(p.high, price);
    p.volume += vol;
    notional += static_cast<double>(price) * static_cast<double>(vol);
  }
  for (int r = 0; r < rounds; ++r) {
    if (out.bids[r].volume > 0) out.bids[r].avg = bid_notional[r] / static_cast<double>(out.bids[r].volume);
    if (out.asks[r].volume > 0) out.asks[r].avg = ask_notional[r] / static_cast<double>(out.asks[r].volume);
  }
  return out;
}

std::vector<int> bid_over_ask_rounds(const PriceRanges& r) {
  std::vector<int> out;
  for (std::size_t i = 0; i < r.bids.size() && i < r.asks.size(); ++i)
    if (r.bids[i].present && r.asks[i].present && r.bids[i].high > r.asks[i].high) out.push_back(r.bids[i].round);
  return out;
}

std::vector<ValuePoint> liquidation_series(const std::vector<Record>& records, const AgentId& agent) {
  if (!known_agents(records).contains(agent)) throw ConfigError("unknown agent '" + agent + "'");
  const int rounds = rounds_in(records);
  std::vector<double> per(rounds, 0.0);
  for (const auto& r : records) {
    if (!is(r, "liquidation") || r.at("agent").get<std::string>() != agent) continue;
    const int round = r.at("frame").get<int>();
    if (round >= 1 && round <= rounds)
      per[round - 1] += static_cast<double>(r.at("proceeds").get<Cents>()) / kCentsPerUnit;
  }
  std::vector<ValuePoint> out;
  double cum = 0.0;
  for (int i = 0; i < rounds; ++i) {
    cum += per[i];
    out.push_back({i + 1, cum});
  }
  return out;
}

int first_liquidation_round(const std::vector<Record>& records, const AgentId& agent) {
  for (const auto& r : records)
    if (is(r, "liquidation") && r.at("agent").get<std::string>() == agent) return r.at("frame").get<int>();
  return 0;
}

std::vector<ContractsPoint> completed_contracts(const std::vector<Record>& records) {
  const int rounds = rounds_in(records);
  std::vector<ContractsPoint> out;
  for (int r = 1; r <= rounds; ++r) out.push_back({r});
  for (const auto& r : records) {
    if (!is(r, "deal")) continue;
    const int round = r.at("frame").get<int>();
    if (round < 1 || round > rounds) continue;
    auto& p = out[round - 1];
    const Qty v = r.at("volume").get<Qty>();
    p.volume += v;
    if (r.at("forced_liquidation").get<bool>()) p.forced_volume += v;
    ++p.deals;
  }
  return out;
}

BehaviourPoint trading_behaviour_index(const std::vector<Record>& records, const AgentId& agent, int round) {
  if (!known_agents(records).contains(agent)) throw ConfigError("unknown agent '" + agent + "'");
  const auto cfg = engine_config(records);
  BehaviourPoint p;
  p.round = round;
  p.agent = agent;

  std::map<OrderId, std::string> origin;
  double notional = 0.0;
  Qty ordered = 0;
  for (const auto& r : records) {
    if (!is(r, "order_accepted")) continue;
    const auto& o = r.at("order");
    const auto kind = r.at("origin").get<std::string>();
    origin[o.at("id").get<OrderId>()] = kind;
    if (kind == "liquidation" || o.at("agent").get<std::string>() != agent || o.at("frame").get<int>() != round)
      continue;
    notional += o.at("price").get<double>() * o.at("volume").get<double>();
    ordered += o.at("volume").get<Qty>();
  }
  for (const auto& r : records) {
    if (!is(r, "deal") || r.at("frame").get<int>() != round) continue;
    const auto buy_id = r.at("buy_order").get<OrderId>();
    const auto sell_id = r.at("sell_order").get<OrderId>();
    if (r.at("buyer").get<std::string>() == agent && origin[buy_id] != "liquidation")
      p.executed += r.at("volume").get<Qty>();
    if (r.at("seller").get<std::string>() == agent && origin[sell_id] != "liquidation")
      p.executed += r.at("volume").get<Qty>();
  }

  const auto start = round_start(records, cfg, agent, round);
  p.position_start = start.position;
  if (ordered > 0) {
    p.vwap = notional / static_cast<double>(ordered);
    p.affordable = max_affordable_volume(start.available, static_cast<Price>(std::llround(p.vwap)),
                                         cfg.asset.multiplier, cfg.rules.initial_margin_bp());
  }
  const Qty denom = p.affordable + std::abs(p.position_start);
  if (denom <= 0) {
    p.zero_capacity = true;
    p.index = 0.0;
    return p;
  }
  p.index = std::clamp(static_cast<double>(p.executed) / static_cast<double>(denom), 0.0, 1.0);
  return p;
}

std::optional<double> group_behaviour_index(const std::vector<Record>& records, const std::string& style,
                                            int round) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [id, s] : roster_styles(records)) {
    if (s != style) continue;
    sum += trading_behaviour_index(records, id, round).index;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

ordered_json run_summary(const std::vector<Record>& records, const ExportOptions& opts) {
  ordered_json s;
  const Record* start = find_first(records, "run_start");
  const Record* end = nullptr;
  for (auto it = records.rbegin(); it != records.rend(); ++it)
    if (is(*it, "run_end")) {
      end = &*it;
      break;
    }
  s["name"] = start ? start->at("name") : ordered_json{};
  s["seed"] = start ? start->at("seed") : ordered_json{};
  s["ablation"] = start ? start->at("ablation") : ordered_json("none");
  s["status"] = end ? end->at("status") : ordered_json("incomplete");
  s["model_calls"] = end ? end->at("model_calls") : ordered_json(0);
  s["rounds"] = rounds_in(records);
  s["events"] = records.size();
  s["settlements"] = settlement_series(records);
  if (find_first(records, "engine_init")) {
    const auto g = growth_rate(records, opts.reference_growth);
    ordered_json gj{{"first", g.first}, {"last", g.last}, {"increase", g.increase}};
    if (g.reference) gj["reference"] = *g.reference;
    if (g.relative_error) gj["relative_error"] = *g.relative_error;
    s["growth"] = gj;
  }
  if (!opts.liquidation_agent.empty() && known_agents(records).contains(opts.liquidation_agent)) {
    const auto series = liquidation_series(records, opts.liquidation_agent);
    s["liquidation"] = {{"agent", opts.liquidation_agent},
                        {"total", series.empty() ? 0.0 : series.back().value},
                        {"first_round", first_liquidation_round(records, opts.liquidation_agent)}};
  }
  s["bid_over_ask_rounds"] = bid_over_ask_rounds(price_range_series(records));
  s["behaviour_index_basis"] = "round-start account; denominator adds |round-start position|";
  return s;
}

ordered_json export_tables(const std::vector<Record>& records, const fs::path& dir, const ExportOptions& opts) {
  fs::create_directories(dir);
  const int rounds = rounds_in(records);

  std::string settle = "round,price,last_price,open_interest\n";
  for (const auto& r : records)
    if (is(r, "settlement"))
      settle += std::to_string(r.at("frame").get<int>()) + "," + std::to_string(r.at("price").get<Price>()) + "," +
                std::to_string(r.at("last_price").get<Price>()) + "," +
                std::to_string(r.at("open_interest").get<Qty>()) + "\n";
  write_file(dir / "settlements.csv", settle);

  const auto ranges = price_range_series(records);
  std::string pr = "round,bid_low,bid_high,bid_avg,bid_volume,ask_low,ask_high,ask_avg,ask_volume\n";
  auto band = [](const BandPoint& b) {
    if (!b.present) return std::string(",,,0");
    return std::to_string(b.low) + "," + std::to_string(b.high) + "," + num(b.avg) + "," + std::to_string(b.volume);
  };
  for (int r = 0; r < rounds; ++r)
    pr += std::to_string(r + 1) + "," + band(ranges.bids[r]) + "," + band(ranges.asks[r]) + "\n";
  write_file(dir / "price_ranges.csv", pr);

  std::string cc = "round,volume,forced_volume,deals\n";
  for (const auto& p : completed_contracts(records))
    cc += std::to_string(p.round) + "," + std::to_string(p.volume) + "," + std::to_string(p.forced_volume) + "," +
          std::to_string(p.deals) + "\n";
  write_file(dir / "contracts.csv", cc);

  const auto styles = roster_styles(records);
  std::string bi = "round,agent,style,index,executed,vwap,affordable,position_start,zero_capacity\n";
  std::string bg = "round,aggressive,conservative,custom\n";
  for (int r = 1; r <= rounds; ++r) {
    std::map<std::string, std::pair<double, int>> acc;
    for (const auto& [id, style] : styles) {
      const auto p = trading_behaviour_index(records, id, r);
      bi += std::to_string(r) + "," + id + "," + style + "," + num(p.index) + "," + std::to_string(p.executed) +
            "," + num(p.vwap) + "," + std::to_string(p.affordable) + "," + std::to_string(p.position_start) + "," +
            (p.zero_capacity ? "1" : "0") + "\n";
      acc[style].first += p.index;
      acc[style].second += 1;
    }
    bg += std::to_string(r);
    for (const char* s : {"aggressive", "conservative", "custom"}) {
      auto it = acc.find(s);
      bg += ",";
      if (it != acc.end()) bg += num(it->second.first / it->second.second);
    }
    bg += "\n";
  }
  write_file(dir / "behaviour_index.csv", bi);
  write_file(dir / "behaviour_groups.csv", bg);

  std::string lq = "round,agent,cumulative_value\n";
  std::set<AgentId> liquidated;
  for (const auto& r : records)
    if (is(r, "liquidation")) liquidated.insert(r.at("agent").get<std::string>());
  if (!opts.liquidation_agent.empty() && known_agents(records).contains(opts.liquidation_agent))
    liquidated.insert(opts.liquidation_agent);
  for (const auto& id : liquidated)
    for (const auto& p : liquidation_series(records, id))
      lq += std::to_string(p.round) + "," + id + "," + num(p.value) + "\n";
  write_file(dir / "liquidation.csv", lq);

  auto summary = run_summary(records, opts);
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  return summary;
}

} // namespace mtsim
