#include "mtsim/service/replay.hpp"

#include <fstream>
#include <memory>
#include <optional>

namespace mtsim {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const std::string& type_of(const Record& r) { return r.at("type").get_ref<const std::string&>(); }

OrderOrigin origin_of(const Record& r) { return origin_from_string(r.at("origin").get<std::string>()); }

} // namespace

ReplayResult replay_events(const std::vector<Record>& events) {
  ReplayResult out;
  std::unique_ptr<Engine> engine;
  bool finished = false;
  auto diverge = [&](std::string what) {
    if (out.divergence.empty()) out.divergence = std::move(what);
  };

  for (const auto& ev : events) {
    const auto& type = type_of(ev);
    try {
      if (type == "engine_init") {
        EngineConfig cfg;
        from_json(ev.at("config"), cfg);
        std::vector<AccountInit> accts;
        for (const auto& a : ev.at("accounts"))
          accts.push_back({a.at("agent").get<std::string>(), a.at("cash").get<Cents>(), a.at("position").get<Qty>()});
        engine = std::make_unique<Engine>(cfg, accts);
      } else if (!engine) {
        continue;
      } else if (type == "frame_start") {
        engine->open_frame();
      } else if (type == "turn_open") {
        engine->open_turn();
      } else if (type == "order_accepted" || type == "order_rejected") {
        if (origin_of(ev) == OrderOrigin::Liquidation) continue;
        const auto& o = ev.at("order");
        OrderRequest req;
        req.agent = o.at("agent").get<std::string>();
        req.side = *side_from_string(o.at("side").get<std::string>());
        req.price = o.at("price").get<Price>();
        req.volume = o.at("volume").get<Qty>();
        const auto res = engine->submit(req, origin_of(ev));
        if (res.id != o.at("id").get<OrderId>() || res.accepted != (type == "order_accepted"))
          diverge("order " + o.at("id").dump() + " replayed differently");
      } else if (type == "turn_closed") {
        const auto deals = engine->match_turn();
        if (deals.size() != ev.at("deals").get<std::size_t>())
          diverge("turn " + std::to_string(engine->frame()) + "." + std::to_string(engine->turn()) +
                  " produced a different number of deals");
      } else if (type == "withdrawal") {
        if (ev.at("reason").get<std::string>() != "agent") continue;
        const OrderId id = ev.at("order").get<OrderId>();
        engine->withdraw_orders(ev.at("agent").get<std::string>(), std::span<const OrderId>(&id, 1));
      } else if (type == "settlement") {
        const auto report = engine->settle_frame();
        out.settlements.push_back(report.price);
        if (report.price != ev.at("price").get<Price>())
          diverge("frame " + std::to_string(report.frame) + " settled at a different price");
      } else if (type == "run_end") {
        finished = true;
      } else {
        continue;
      }
    } catch (const std::exception& e) {
      out.error = "event seq " + ev.value("seq", ordered_json{}).dump() + " (" + type + "): " + e.what();
      break;
    }
    ++out.events_applied;
  }

  if (engine) {
    out.accounts = engine->accounts();
    out.frame = engine->frame();
    out.turn = engine->turn();
    if (!engine->finished() && !finished) out.truncated = true;
  } else {
    out.truncated = true;
  }
  if (!out.error.empty()) out.truncated = true;
  return out;
}

ReplayResult replay_file(const fs::path& path) {
  auto log = load_jsonl_file(path.string());
  auto out = replay_events(log.events);
  if (log.bad_line != 0) {
    out.bad_line = log.bad_line;
    out.truncated = true;
    if (out.error.empty()) out.error = "line " + std::to_string(log.bad_line) + ": " + log.error;
  }
  return out;
}

std::map<AgentId, Account> logged_final_accounts(const std::vector<Record>& events) {
  std::map<AgentId, Account> out;
  for (auto it = events.rbegin(); it != events.rend(); ++it) {
    if (type_of(*it) != "settlement") continue;
    for (const auto& a : it->at("accounts")) {
      auto acct = account_from_json(a);
      // marks "liquidated in this settlement"; the engine clears it afterwards
      acct.liquidation = false;
      out.emplace(acct.agent, acct);
    }
    break;
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

} // namespace

GraphCounts export_graph(const std::vector<Record>& events, const fs::path& dir) {
  fs::create_directories(dir);
  GraphCounts n;
  std::string nodes = "id,kind,label,frame,turn\n";
  std::string edges = "source,target,kind\n";
  auto node = [&](const std::string& id, const char* kind, const std::string& label, int frame, int turn) {
    nodes += csv_field(id) + "," + kind + "," + csv_field(label) + "," + std::to_string(frame) + "," +
             std::to_string(turn) + "\n";
  };
  auto edge = [&](const std::string& from, const std::string& to, const char* kind) {
    edges += csv_field(from) + "," + csv_field(to) + "," + kind + "\n";
    ++n.edges;
  };

  for (const auto& ev : events) {
    const auto& type = type_of(ev);
    if (type == "engine_init") {
      for (const auto& a : ev.at("accounts")) {
        node("agent:" + a.at("agent").get<std::string>(), "agent", a.at("agent").get<std::string>(), 0, 0);
        ++n.agents;
      }
    } else if (type == "order_accepted") {
      const auto& o = ev.at("order");
      const std::string id = "order:" + std::to_string(o.at("id").get<OrderId>());
      const auto label = o.at("side").get<std::string>() + " " + std::to_string(o.at("volume").get<Qty>()) + "@" +
                         std::to_string(o.at("price").get<Price>());
      node(id, "order", label, o.at("frame").get<int>(), o.at("turn").get<int>());
      ++n.orders;
      edge("agent:" + o.at("agent").get<std::string>(), id, "submitted");
    } else if (type == "deal") {
      const std::string id = "deal:" + std::to_string(ev.at("id").get<DealId>());
      const auto label = std::to_string(ev.at("volume").get<Qty>()) + "@" + std::to_string(ev.at("price").get<Price>());
      node(id, "deal", label, ev.at("frame").get<int>(), ev.at("turn").get<int>());
      ++n.deals;
      edge("order:" + std::to_string(ev.at("buy_order").get<OrderId>()), id, "matched");
      edge("order:" + std::to_string(ev.at("sell_order").get<OrderId>()), id, "matched");
    } else if (type == "news_event") {
      const std::string id = "event:" + std::to_string(ev.at("seq").get<std::uint64_t>());
      node(id, "event", ev.at("text").get<std::string>(), ev.at("frame").get<int>(), ev.at("turn").get<int>());
      ++n.events;
      for (const auto& a : ev.at("delivered_to")) edge(id, "agent:" + a.get<std::string>(), "observed");
    }
  }

  for (const auto& [name, content] : {std::pair{"nodes.csv", &nodes}, std::pair{"edges.csv", &edges}}) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << *content;
  }
  return n;
}

} // namespace mtsim
