#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>

#include "mtsim/service/batch.hpp"
#include "mtsim/service/replay.hpp"
#include "mtsim/service/server.hpp"

using namespace mtsim;
using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const fs::path kRoot{MTSIM_SOURCE_DIR};
const fs::path kFixtures = kRoot / "tests/fixtures";

constexpr Cents units(std::int64_t u) { return u * kCentsPerUnit; }

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mtsim_service_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// flat fixture plus two human proxies
json proxy_scenario() {
  std::ifstream in(kFixtures / "flat.scenario.json");
  json doc = json::parse(in);
  doc["name"] = "proxies";
  doc["engine"]["d_sim"] = 3;
  doc["roster"].push_back({{"id", "h1"}, {"style", "custom"}, {"human_proxy", true}, {"cash", 100000}});
  doc["roster"].push_back({{"id", "h2"}, {"style", "custom"}, {"human_proxy", true}, {"cash", 100000}});
  return doc;
}

struct Manager {
  RunManager m;
  explicit Manager(const std::string& name)
      : m({.scenario_root = kFixtures, .runs_dir = temp_dir(name), .backends_file = {}, .turn_window_s = 30}) {}

  ApiResult call(const std::string& method, const std::string& target, const json& body = nullptr) {
    return m.handle(method, target, body.is_null() ? "" : body.dump());
  }
};

bool window_open(const ordered_json& s) { return s.value("window_open", false); }

} // namespace

TEST(Replay, ReconstructsFinalAccounts) {
  const auto dir = temp_dir("replay");
  const auto res = run_batch(load_scenario(kRoot / "scenarios/tsingshan.scenario.json"), {}, dir);
  const auto loaded = load_jsonl_file(res.log.string());
  ASSERT_EQ(loaded.bad_line, 0u);

  const auto r = replay_events(loaded.events);
  EXPECT_TRUE(r.divergence.empty()) << r.divergence;
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.frame, 10);
  const auto logged = logged_final_accounts(loaded.events);
  ASSERT_EQ(r.accounts.size(), logged.size());
  for (const auto& [id, a] : logged) {
    SCOPED_TRACE(id);
    const auto& b = r.accounts.at(id);
    EXPECT_EQ(account_to_json(a), account_to_json(b));
  }
  EXPECT_EQ(r.settlements.size(), 10u);

  const auto f = replay_file(res.log);
  EXPECT_EQ(f.accounts.size(), logged.size());
  EXPECT_TRUE(f.divergence.empty());
}

TEST(Replay, TruncatedAndCorruptLogs) {
  const auto dir = temp_dir("truncated");
  const auto res = run_batch(load_scenario(kRoot / "scenarios/normal/ta501.scenario.json"), {}, dir);
  auto lines = lines_of(res.log);
  ASSERT_GT(lines.size(), 10u);

  std::vector<Record> half;
  for (std::size_t i = 0; i < lines.size() / 2; ++i) half.push_back(Record::parse(lines[i]));
  const auto r = replay_events(half);
  EXPECT_TRUE(r.truncated);
  EXPECT_TRUE(r.divergence.empty());

  const auto bad = dir / "bad.jsonl";
  {
    std::ofstream out(bad);
    for (std::size_t i = 0; i < 8; ++i) out << lines[i] << "\n";
    out << "{\"type\": \"deal\", \"sq\n";
    for (std::size_t i = 8; i < lines.size(); ++i) out << lines[i] << "\n";
  }
  const auto b = replay_file(bad);
  EXPECT_EQ(b.bad_line, 9u);
  EXPECT_TRUE(b.truncated);
}

TEST(Replay, TamperedDealIsReported) {
  const auto dir = temp_dir("tamper");
  const auto res = run_batch(load_scenario(kRoot / "scenarios/normal/ta501.scenario.json"), {}, dir);
  auto events = load_jsonl_file(res.log.string()).events;
  for (auto& e : events)
    if (e["type"] == "settlement") {
      e["price"] = e["price"].get<Price>() + 2;
      break;
    }
  EXPECT_FALSE(replay_events(events).divergence.empty());
}

TEST(Graph, OneDealRun) {
  EngineConfig cfg;
  cfg.asset.tick = 1;
  cfg.d_sim = 1;
  cfg.d_turn = 1;
  cfg.initial_price = 100;
  Engine e(cfg, {{"a", units(10000), 0}, {"b", units(10000), 0}});
  e.open_frame();
  e.open_turn();
  OrderRequest buy{.agent = "a", .side = Side::Buy, .price = 100, .volume = 2};
  OrderRequest sell{.agent = "b", .side = Side::Sell, .price = 100, .volume = 2};
  e.submit(buy);
  e.submit(sell);
  ASSERT_EQ(e.match_turn().size(), 1u);
  e.settle_frame();

  const auto dir = temp_dir("graph");
  const auto n = export_graph(e.records().snapshot(), dir);
  EXPECT_EQ(n.agents, 2u);
  EXPECT_EQ(n.orders, 2u);
  EXPECT_EQ(n.deals, 1u);
  EXPECT_EQ(n.events, 0u);
  EXPECT_EQ(n.edges, 4u);
  const auto nodes = lines_of(dir / "nodes.csv");
  const auto edges = lines_of(dir / "edges.csv");
  EXPECT_EQ(nodes.front(), "id,kind,label,frame,turn");
  EXPECT_EQ(nodes.size(), 6u);
  EXPECT_EQ(edges.front(), "source,target,kind");
  EXPECT_EQ(edges.size(), 5u);
  EXPECT_NE(std::find(edges.begin(), edges.end(), "order:1,deal:1,matched"), edges.end());
  EXPECT_NE(std::find(edges.begin(), edges.end(), "agent:b,order:2,submitted"), edges.end());
}

TEST(Graph, NewsBecomesObservedEdges) {
  const auto dir = temp_dir("graph_news");
  const auto res = run_batch(load_scenario(kRoot / "scenarios/tsingshan.scenario.json"), {}, dir);
  const auto n = export_graph(load_jsonl_file(res.log.string()).events, dir / "g");
  EXPECT_EQ(n.agents, 10u);
  EXPECT_EQ(n.events, 3u);
  const auto edges = lines_of(dir / "g/edges.csv");
  EXPECT_EQ(std::count_if(edges.begin(), edges.end(),
                          [](const std::string& l) { return l.ends_with(",observed"); }),
            21);
}

TEST(RunManagerApi, RoutingErrors) {
  Manager mg("routing");
  EXPECT_EQ(mg.call("GET", "/health").status, 200);
  EXPECT_EQ(mg.call("GET", "/nope").status, 404);
  EXPECT_EQ(mg.call("GET", "/runs/run-9/state").status, 404);
  EXPECT_EQ(mg.call("DELETE", "/runs").status, 405);
  EXPECT_EQ(mg.m.handle("POST", "/runs", "{oops").status, 400);
  EXPECT_EQ(mg.call("POST", "/runs", {{"nothing", 1}}).status, 422);
  const auto bad = mg.call("POST", "/runs", {{"scenario", "does-not-exist.json"}});
  EXPECT_EQ(bad.status, 422);
  auto doc = proxy_scenario();
  doc["news"] = {{{"frame", 99}, {"text", "x"}}};
  const auto range = mg.call("POST", "/runs", {{"scenario", doc}});
  EXPECT_EQ(range.status, 422);
  EXPECT_EQ(range.body["where"], "/news/0/frame");
}

TEST(RunManagerApi, StateMachine) {
  Manager mg("states");
  const auto created = mg.call("POST", "/runs", {{"scenario", proxy_scenario()}, {"turn_window_s", 5}});
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["id"];
  EXPECT_EQ(created.body["state"], "configuring");
  const std::string base = "/runs/" + id;

  EXPECT_EQ(mg.call("POST", base + "/pause").status, 409);
  EXPECT_EQ(mg.call("POST", base + "/advance").status, 409);
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "h1"}, {"side", "buy"}, {"price", 100}, {"volume", 1}}).status,
            409);

  // future event is accepted before the run starts
  const auto ev = mg.call("POST", base + "/events", {{"frame", 3}, {"targets", "all"}, {"text", "late news"}});
  EXPECT_EQ(ev.status, 202);
  EXPECT_EQ(ev.body["queued_for"], 3);
  EXPECT_EQ(mg.call("POST", base + "/events", {{"frame", 2}, {"targets", {"ghost"}}, {"text", "x"}}).status, 422);
  EXPECT_EQ(mg.call("POST", base + "/events", {{"text", "no frame"}}).status, 422);

  ASSERT_EQ(mg.call("POST", base + "/start").status, 200);
  EXPECT_EQ(mg.call("POST", base + "/start").status, 409);
  auto run = mg.m.find(id);
  ASSERT_TRUE(run->wait_for(window_open, 10s));

  EXPECT_EQ(mg.call("POST", base + "/pause").status, 200);
  EXPECT_EQ(mg.call("POST", base + "/advance").status, 200);
  ASSERT_TRUE(run->wait_for([](const ordered_json& s) { return s["state"] == "paused"; }, 10s));
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "h1"}, {"side", "buy"}, {"price", 100}, {"volume", 1}}).status,
            409);
  EXPECT_EQ(mg.call("POST", base + "/pause").status, 409);

  EXPECT_EQ(mg.call("POST", base + "/start").status, 200);
  ASSERT_TRUE(run->wait_for(
      [](const ordered_json& s) { return s["state"] == "running" && s.value("window_open", false); }, 10s));
  EXPECT_EQ(mg.call("GET", base + "/state").body["state"], "running");

  EXPECT_EQ(mg.call("POST", base + "/halt").status, 200);
  run->wait();
  EXPECT_EQ(mg.call("GET", base).body["state"], "halted");
  EXPECT_EQ(mg.call("POST", base + "/halt").status, 409);
  EXPECT_EQ(mg.call("POST", base + "/start").status, 409);
  EXPECT_EQ(mg.call("POST", base + "/events", {{"frame", 3}, {"text", "x"}}).status, 409);

  const auto list = mg.call("GET", "/runs");
  ASSERT_EQ(list.body.size(), 1u);
  EXPECT_EQ(list.body[0]["id"], id);
}

TEST(RunManagerApi, HumanOrdersMatchInTheSameTurn) {
  Manager mg("human");
  const auto created =
      mg.call("POST", "/runs", {{"scenario", proxy_scenario()}, {"turn_window_s", 10}, {"autostart", true}});
  ASSERT_EQ(created.status, 201);
  const std::string base = "/runs/" + created.body["id"].get<std::string>();
  auto run = mg.m.find(created.body["id"]);
  ASSERT_TRUE(run->wait_for(window_open, 10s));

  // proxies only
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "a"}, {"side", "buy"}, {"price", 100}, {"volume", 1}}).status,
            422);
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "zz"}, {"side", "buy"}, {"price", 100}, {"volume", 1}}).status,
            422);
  const auto rejected =
      mg.call("POST", base + "/orders", {{"agent", "h1"}, {"side", "buy"}, {"price", 100}, {"volume", 0}});
  EXPECT_EQ(rejected.status, 422);
  EXPECT_EQ(rejected.body["accepted"], false);
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "h1"}, {"side", "up"}, {"price", 100}, {"volume", 1}}).status,
            422);
  EXPECT_EQ(mg.call("POST", base + "/orders", {{"agent", "h1"}}).status, 422);

  const auto buy = mg.call("POST", base + "/orders", {{"agent", "h1"}, {"side", "buy"}, {"price", 101}, {"volume", 3}});
  ASSERT_EQ(buy.status, 200) << buy.body.dump();
  const auto sell = mg.call("POST", base + "/orders", {{"agent", "h2"}, {"side", "sell"}, {"price", 101}, {"volume", 2}});
  ASSERT_EQ(sell.status, 200);
  const auto extra =
      mg.call("POST", base + "/orders", {{"agent", "h2"}, {"side", "sell"}, {"price", 150}, {"volume", 1}});
  ASSERT_EQ(extra.status, 200);
  const auto w = mg.call("POST", base + "/withdrawals", {{"agent", "h1"}, {"orders", {extra.body["id"]}}});
  EXPECT_EQ(w.status, 422);
  EXPECT_EQ(w.body["results"][0]["error"], "order belongs to another agent");
  EXPECT_EQ(mg.call("POST", base + "/withdrawals", {{"agent", "h2"}, {"orders", {extra.body["id"]}}}).status, 200);

  const int frame = buy.body["frame"], turn = buy.body["turn"];
  EXPECT_EQ(mg.call("POST", base + "/advance").status, 200);
  ASSERT_TRUE(run->wait_for(
      [&](const ordered_json& s) { return s["frame"] > frame || s["turn"] > turn || s["state"] != "running"; }, 10s));

  bool matched = false;
  for (const auto& e : run->records().snapshot())
    if (e["type"] == "deal" && e["buyer"] == "h1" && e["seller"] == "h2") {
      EXPECT_EQ(e["frame"], frame);
      EXPECT_EQ(e["turn"], turn);
      EXPECT_EQ(e["volume"], 2);
      EXPECT_EQ(e["price"], 101);
      matched = true;
    }
  EXPECT_TRUE(matched);

  const auto records = mg.call("GET", base + "/records?since=3");
  ASSERT_EQ(records.status, 200);
  EXPECT_EQ(records.body[0]["seq"], 4);
  EXPECT_EQ(mg.call("GET", base + "/records?since=abc").status, 400);
  const auto metrics = mg.call("GET", base + "/metrics");
  EXPECT_EQ(metrics.status, 200);
  EXPECT_TRUE(metrics.body.contains("behaviour_groups"));
  mg.call("POST", base + "/halt");
}

TEST(RunManagerApi, LateEventsAndUnpacedRuns) {
  Manager mg("late");
  auto doc = proxy_scenario();
  doc["roster"].erase(3);
  doc["roster"].erase(2);
  const auto created = mg.call("POST", "/runs", {{"scenario", doc}, {"autostart", true}});
  ASSERT_EQ(created.status, 201);
  auto run = mg.m.find(created.body["id"]);
  // no proxies: windows close at once and the run finishes by itself
  ASSERT_TRUE(run->wait_for([](const ordered_json& s) { return s["state"] == "finished"; }, 20s));
  const auto late = mg.call("POST", "/runs/" + run->id() + "/events", {{"frame", 1}, {"text", "too late"}});
  EXPECT_EQ(late.status, 409);

  const auto lines = lines_of(run->log_path());
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(json::parse(lines.back())["type"], "run_end");
  EXPECT_EQ(lines.size(), run->records().size());
}

TEST(Server, HttpAndStream) {
  ServerOptions opts;
  opts.port = 0;
  opts.scenario_root = kFixtures.string();
  opts.runs_dir = temp_dir("server").string();
  Server server(opts);
  std::thread loop([&] { server.run(); });

  httplib::Client http("127.0.0.1", server.port());
  auto health = http.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("Content-Type"), "application/json");

  auto created = http.Post("/runs", json{{"scenario", "flat.scenario.json"}}.dump(), "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  const std::string id = json::parse(created->body)["id"];
  EXPECT_EQ(http.Get("/runs/nope")->status, 404);

  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  boost::asio::io_context io;
  boost::asio::ip::tcp::resolver resolver(io);
  websocket::stream<boost::asio::ip::tcp::socket> ws(io);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/runs/" + id + "/stream?since=0");

  EXPECT_EQ(http.Post("/runs/" + id + "/start", "", "application/json")->status, 200);

  std::vector<json> got;
  for (;;) {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws.read(buf, ec);
    ASSERT_FALSE(ec) << ec.message();
    got.push_back(json::parse(beast::buffers_to_string(buf.data())));
    if (got.back()["type"] == "run_end") break;
  }
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i]["seq"], i + 1);
  EXPECT_EQ(got.front()["type"], "engine_init");
  // the server closes once the run has ended
  {
    beast::flat_buffer buf;
    beast::error_code ec;
    ws.read(buf, ec);
    EXPECT_EQ(ec, websocket::error::closed);
  }

  // resume from the middle
  websocket::stream<boost::asio::ip::tcp::socket> ws2(io);
  boost::asio::connect(ws2.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws2.handshake("127.0.0.1", "/runs/" + id + "/stream?since=10");
  beast::flat_buffer buf;
  ws2.read(buf);
  EXPECT_EQ(json::parse(beast::buffers_to_string(buf.data()))["seq"], 11);
  ws2.close(websocket::close_code::normal);

  auto state = http.Get("/runs/" + id + "/state");
  EXPECT_EQ(json::parse(state->body)["state"], "finished");

  server.stop();
  loop.join();
}

TEST(Server, ClientCloseMidRun) {
  ServerOptions opts;
  opts.port = 0;
  opts.scenario_root = kFixtures.string();
  opts.runs_dir = temp_dir("server_close").string();
  Server server(opts);
  std::thread loop([&] { server.run(); });

  const auto created = server.runs().handle(
      "POST", "/runs", json{{"scenario", proxy_scenario()}, {"turn_window_s", 60}, {"autostart", true}}.dump());
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["id"];

  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  boost::asio::io_context io;
  boost::asio::ip::tcp::resolver resolver(io);
  websocket::stream<boost::asio::ip::tcp::socket> ws(io);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/runs/" + id + "/stream");
  beast::flat_buffer buf;
  ws.read(buf);
  EXPECT_EQ(json::parse(beast::buffers_to_string(buf.data()))["seq"], 1);

  const auto t0 = std::chrono::steady_clock::now();
  ws.close(websocket::close_code::normal);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);

  server.stop();
  loop.join();
}

TEST(Cli, ExitCodes) {
  const std::string cli = MTSIM_CLI;
  auto code = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const auto out = temp_dir("cli");
  EXPECT_EQ(code(cli + " run /nonexistent/x.scenario.json -o " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out / "records.jsonl"));
  EXPECT_EQ(code(cli + " run " + (kFixtures / "flat.scenario.json").string() + " -o " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "records.jsonl"));
  EXPECT_TRUE(fs::exists(out / "metrics/summary.json"));
  EXPECT_EQ(code(cli + " replay " + (out / "records.jsonl").string()), 0);
  EXPECT_EQ(code(cli + " metrics /nonexistent.jsonl"), 2);
}
