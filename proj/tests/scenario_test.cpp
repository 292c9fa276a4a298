#include <gtest/gtest.h>

#include <fstream>

#include "mtsim/scenario/scenario.hpp"

using namespace mtsim;
using nlohmann::ordered_json;

namespace {

const std::filesystem::path kRoot{MTSIM_SOURCE_DIR};

ordered_json flat_doc() {
  std::ifstream in(kRoot / "tests/fixtures/flat.scenario.json");
  return ordered_json::parse(in);
}

std::string where_of(const ordered_json& doc) {
  try {
    parse_scenario(doc.dump(), kRoot / "tests/fixtures");
  } catch (const ScenarioError& e) {
    return e.where();
  }
  return "no error";
}

} // namespace

TEST(Scenario, BundledTsingshan) {
  const auto s = load_scenario(kRoot / "scenarios/tsingshan.scenario.json");
  EXPECT_EQ(s.roster.size(), 10u);
  EXPECT_EQ(s.engine.d_sim, 10);

  Qty longest = 0, shortest = 0;
  AgentId long_id, short_id;
  for (const auto& r : s.roster) {
    if (r.account.position > longest) longest = r.account.position, long_id = r.profile.id;
    if (r.account.position < shortest) shortest = r.account.position, short_id = r.profile.id;
  }
  EXPECT_EQ(long_id, "glencore");
  EXPECT_EQ(short_id, "tsingshan");

  bool war = false, rumour = false;
  for (const auto& n : s.news) {
    if (n.frame == 4 && n.text.find("sanctions") != std::string::npos) war = true;
    if (n.frame == 5 && n.text.find("short position") != std::string::npos) rumour = true;
  }
  EXPECT_TRUE(war);
  EXPECT_TRUE(rumour);
  EXPECT_EQ(s.reference.liquidation_agent, "tsingshan");
}

TEST(Scenario, NormalTemplatesLoadAndPrepare) {
  for (const char* c : {"sc2501", "ta501", "ih2412", "gcg2502", "ch2503", "sf2503"}) {
    SCOPED_TRACE(c);
    const auto s = load_scenario(kRoot / "scenarios/normal" / (std::string(c) + ".scenario.json"));
    EXPECT_EQ(s.engine.d_sim, 3);
    EXPECT_NO_THROW(prepare_run(s));
  }
}

TEST(Scenario, MinimalFlatGetsDefaults) {
  const auto s = load_scenario(kRoot / "tests/fixtures/flat.scenario.json");
  EXPECT_EQ(s.roster.size(), 2u);
  EXPECT_EQ(s.engine.rules.matching_policy, "cda_price_time");
  EXPECT_DOUBLE_EQ(s.engine.rules.initial_margin, 0.125);
  EXPECT_DOUBLE_EQ(s.engine.rules.maintenance_margin, 0.10);
  EXPECT_EQ(s.engine.asset.lot, 1);
  EXPECT_TRUE(s.news.empty());
  EXPECT_EQ(s.agent.ablation, Ablation{});
  EXPECT_EQ(s.seed, 1u);
  EXPECT_TRUE(s.deterministic);
  EXPECT_EQ(s.roster[0].account.cash, 100000 * kCentsPerUnit);
}

TEST(Scenario, FrameOutOfRange) {
  auto doc = flat_doc();
  doc["news"] = {{{"frame", 99}, {"targets", "all"}, {"text", "late"}}};
  EXPECT_EQ(where_of(doc), "/news/0/frame");
}

TEST(Scenario, DanglingReferences) {
  auto doc = flat_doc();
  doc["news"] = {{{"frame", 1}, {"targets", {"a", "ghost"}}, {"text", "hi"}}};
  EXPECT_EQ(where_of(doc), "/news/0/targets/1");

  doc = flat_doc();
  doc["engine"]["disclosure"] = {"ghost"};
  EXPECT_EQ(where_of(doc), "/engine/disclosure/0");

  doc = flat_doc();
  doc["reference"] = {{"liquidation_agent", "ghost"}};
  EXPECT_EQ(where_of(doc), "/reference/liquidation_agent");
}

TEST(Scenario, SchemaViolations) {
  auto doc = flat_doc();
  doc["roster"][1]["id"] = "a";
  EXPECT_EQ(where_of(doc), "/roster/1/id");

  doc = flat_doc();
  doc["roster"][1]["position"] = -4;
  EXPECT_EQ(where_of(doc), "/roster");

  doc = flat_doc();
  doc["engine"]["d_sim"] = "ten";
  EXPECT_EQ(where_of(doc), "/engine/d_sim");

  doc = flat_doc();
  doc["generator"]["history"] = "x.csv";
  EXPECT_EQ(where_of(doc), "/generator");

  doc = flat_doc();
  doc["ablation"] = "no_brain";
  EXPECT_EQ(where_of(doc), "/ablation");

  doc = flat_doc();
  doc.erase("engine");
  EXPECT_EQ(where_of(doc), "/engine");
}

TEST(Scenario, SyntaxErrorsCarryLineAndColumn) {
  try {
    parse_scenario("{\n  \"name\": \"x\",\n  \"engine\": ,\n}");
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.where(), "line 3, column 13");
  }
}

TEST(Scenario, LoadPrefixesPath) {
  const auto dir = std::filesystem::temp_directory_path() / "mtsim_scenario_test";
  std::filesystem::create_directories(dir);
  auto doc = flat_doc();
  doc["news"] = {{{"frame", 99}, {"targets", "all"}, {"text", "late"}}};
  std::ofstream(dir / "bad.json") << doc.dump();
  try {
    load_scenario(dir / "bad.json");
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.where(), (dir / "bad.json").string() + ":/news/0/frame");
    EXPECT_NE(std::string(e.what()).find("outside 1..2"), std::string::npos);
  }
}

TEST(Scenario, RoundTrip) {
  for (const auto& path : {kRoot / "scenarios/tsingshan.scenario.json", kRoot / "tests/fixtures/flat.scenario.json",
                           kRoot / "scenarios/normal/sc2501.scenario.json"}) {
    SCOPED_TRACE(path.string());
    const auto a = load_scenario(path);
    const auto ja = scenario_to_json(a);
    const auto b = parse_scenario(ja.dump(), a.base_dir);
    EXPECT_EQ(scenario_to_json(b), ja);
  }
}

TEST(Scenario, PrepareRunNeedsEveryBackend) {
  auto s = load_scenario(kRoot / "tests/fixtures/flat.scenario.json");
  s.roster[1].profile.backend = "missing";
  try {
    prepare_run(s);
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }

  s = load_scenario(kRoot / "tests/fixtures/flat.scenario.json");
  s.agent.expert_backend = "nobody";
  EXPECT_THROW(prepare_run(s), ScenarioError);
}

TEST(Scenario, RunOptionsOverride) {
  const auto s = load_scenario(kRoot / "tests/fixtures/flat.scenario.json");
  RunOptions o;
  o.seed = 77;
  o.ablation = Ablation{.no_expert = true};
  auto run = prepare_run(s, o);
  run.simulation->run();
  const auto events = run.records->snapshot();
  const auto start = std::find_if(events.begin(), events.end(), [](const Record& e) { return e["type"] == "run_start"; });
  ASSERT_NE(start, events.end());
  EXPECT_EQ((*start)["seed"], 77);
  EXPECT_EQ((*start)["ablation"], "no_expert");
  EXPECT_EQ(events.front()["config"]["rng_seed"], 77);
}

TEST(Scenario, RedactionsParsed) {
  const auto s = load_scenario(kRoot / "scenarios/tsingshan.scenario.json");
  ASSERT_EQ(s.redactions.size(), 2u);
  EXPECT_EQ(s.redactions[0].from, "Tsingshan");
  EXPECT_EQ(s.redactions[0].to, "Company T");
}
