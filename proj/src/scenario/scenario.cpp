#include "mtsim/scenario/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mtsim {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  // nlohmann reports the offset one past the offending character
  if (col > 1) --col;
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string ptr(const std::string& base, const std::string& key) { return base + "/" + key; }
std::string ptr(const std::string& base, std::size_t i) { return base + "/" + std::to_string(i); }

// Runs `fn`, re-throwing anything it throws as a ScenarioError at `where`.
template <class Fn>
auto at_path(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ScenarioError&) {
    throw;
  } catch (const json::exception& e) {
    std::string msg = e.what();
    // "[json.exception.type_error.302] type must be number, but is string"
    if (auto p = msg.find("] "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ScenarioError(where, msg);
  } catch (const std::exception& e) {
    throw ScenarioError(where, e.what());
  }
}

const ordered_json& require(const ordered_json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ScenarioError(ptr(where, key), "required");
  return *it;
}

void require_object(const ordered_json& j, const std::string& where) {
  if (!j.is_object()) throw ScenarioError(where.empty() ? "/" : where, "expected an object");
}

void require_array(const ordered_json& j, const std::string& where) {
  if (!j.is_array()) throw ScenarioError(where, "expected an array");
}

template <class T>
T get(const ordered_json& j, const std::string& key, const std::string& where) {
  const auto& v = require(j, key, where);
  return at_path(ptr(where, key), [&] { return v.get<T>(); });
}

template <class T>
T get_or(const ordered_json& j, const std::string& key, T dflt, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return dflt;
  return at_path(ptr(where, key), [&] { return it->get<T>(); });
}

template <class T>
std::optional<T> get_opt(const ordered_json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return at_path(ptr(where, key), [&] { return it->get<T>(); });
}

Cents to_cents(double units) { return static_cast<Cents>(std::llround(units * kCentsPerUnit)); }

EngineConfig parse_engine(const ordered_json& j, const std::string& where) {
  require_object(j, where);
  EngineConfig c;
  const std::string aw = ptr(where, "asset");
  const auto& a = require(j, "asset", where);
  require_object(a, aw);
  c.asset.description = get_or<std::string>(a, "description", "", aw);
  c.asset.tick = get<Price>(a, "tick", aw);
  c.asset.lot = get_or<std::int64_t>(a, "lot", 1, aw);
  c.asset.multiplier = get_or<std::int64_t>(a, "multiplier", c.asset.lot, aw);

  const std::string rw = ptr(where, "rules");
  static const ordered_json no_rules = ordered_json::object();
  const auto rit = j.find("rules");
  const auto& r = rit == j.end() ? no_rules : *rit;
  require_object(r, rw);
  c.rules.matching_policy = get_or<std::string>(r, "matching_policy", c.rules.matching_policy, rw);
  c.rules.price_band = get_opt<double>(r, "price_band", rw);
  c.rules.initial_margin = get_or<double>(r, "initial_margin", c.rules.initial_margin, rw);
  c.rules.maintenance_margin = get_or<double>(r, "maintenance_margin", c.rules.maintenance_margin, rw);
  c.rules.fee_per_contract = get_or<Cents>(r, "fee_per_contract", 0, rw);

  c.d_sim = get<int>(j, "d_sim", where);
  c.d_turn = get<int>(j, "d_turn", where);
  c.initial_price = get<Price>(j, "initial_price", where);
  c.rng_seed = get_or<std::uint64_t>(j, "rng_seed", 0, where);
  c.disclosure = get_or<std::vector<AgentId>>(j, "disclosure", {}, where);
  at_path(where, [&] { c.validate(); });
  return c;
}

GeneratorRef parse_generator(const ordered_json& j, const std::string& where) {
  require_object(j, where);
  GeneratorRef g;
  g.history = get_or<std::string>(j, "history", "", where);
  g.model = get_or<std::string>(j, "model", "", where);
  if (g.history.empty() == g.model.empty())
    throw ScenarioError(where, "exactly one of 'history' or 'model' is required");
  g.fit.k = get_or<int>(j, "k", g.fit.k, where);
  g.fit.seed = get_or<std::uint64_t>(j, "seed", g.fit.seed, where);
  g.fit.window = get_or<int>(j, "window", g.fit.window, where);
  g.fit.volume_from_data = get_or<bool>(j, "volume_from_data", false, where);
  if (g.fit.k < 1) throw ScenarioError(ptr(where, "k"), "must be >= 1");
  if (g.fit.window < 1) throw ScenarioError(ptr(where, "window"), "must be >= 1");
  g.mu_v = get_opt<double>(j, "mu_v", where);
  g.sigma_v = get_opt<double>(j, "sigma_v", where);
  if (g.sigma_v && *g.sigma_v < 0) throw ScenarioError(ptr(where, "sigma_v"), "must be >= 0");
  g.aggressive_mult = get_opt<double>(j, "aggressive_mult", where);
  g.conservative_mult = get_opt<double>(j, "conservative_mult", where);
  g.max_orders = get_opt<int>(j, "max_orders", where);
  if (g.max_orders && *g.max_orders < 1) throw ScenarioError(ptr(where, "max_orders"), "must be >= 1");
  return g;
}

RosterEntry parse_roster_entry(const ordered_json& j, const std::string& where) {
  require_object(j, where);
  RosterEntry e;
  if (!j.contains("id")) throw ScenarioError(ptr(where, "id"), "required");
  e.profile = at_path(where, [&] { return profile_from_json(j); });
  e.account.agent = e.profile.id;
  const double cash = get_or<double>(j, "cash", 0.0, where);
  if (!(cash >= 0.0)) throw ScenarioError(ptr(where, "cash"), "must be >= 0");
  e.account.cash = to_cents(cash);
  e.account.position = get_or<Qty>(j, "position", 0, where);
  return e;
}

ScenarioReference parse_reference(const ordered_json& j, const std::string& where) {
  require_object(j, where);
  ScenarioReference r;
  r.growth_rate = get_opt<double>(j, "growth_rate", where);
  r.actual_settlements = get_or<std::vector<double>>(j, "actual_settlements", {}, where);
  r.liquidation_plateau = get_opt<double>(j, "liquidation_plateau", where);
  r.liquidation_agent = get_or<std::string>(j, "liquidation_agent", "", where);
  r.note = get_or<std::string>(j, "note", "", where);
  return r;
}

} // namespace

Scenario parse_scenario(const std::string& text, const fs::path& base_dir) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (auto p = msg.find("] "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ScenarioError(line_col(text, e.byte), msg);
  }
  require_object(doc, "");

  Scenario s;
  s.base_dir = base_dir;
  s.name = get<std::string>(doc, "name", "");
  if (s.name.empty()) throw ScenarioError("/name", "must not be empty");
  s.description = get_or<std::string>(doc, "description", "", "");
  s.engine = parse_engine(require(doc, "engine", ""), "/engine");

  const auto& roster = require(doc, "roster", "");
  require_array(roster, "/roster");
  if (roster.empty()) throw ScenarioError("/roster", "at least one agent is required");
  std::set<AgentId> ids;
  Qty net = 0;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    const auto where = ptr("/roster", i);
    auto e = parse_roster_entry(roster[i], where);
    if (!ids.insert(e.profile.id).second)
      throw ScenarioError(ptr(where, "id"), "duplicate agent id '" + e.profile.id + "'");
    net += e.account.position;
    s.roster.push_back(std::move(e));
  }
  if (net != 0)
    throw ScenarioError("/roster", "initial positions must net to zero, got " + std::to_string(net));
  for (std::size_t i = 0; i < s.engine.disclosure.size(); ++i)
    if (!ids.contains(s.engine.disclosure[i]))
      throw ScenarioError(ptr("/engine/disclosure", i), "unknown agent '" + s.engine.disclosure[i] + "'");

  if (auto it = doc.find("news"); it != doc.end()) {
    require_array(*it, "/news");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto where = ptr("/news", i);
      require_object((*it)[i], where);
      auto n = at_path(where, [&] { return news_from_json((*it)[i]); });
      if (n.frame < 1 || n.frame > s.engine.d_sim)
        throw ScenarioError(ptr(where, "frame"), "frame " + std::to_string(n.frame) + " outside 1.." +
                                                     std::to_string(s.engine.d_sim));
      for (std::size_t t = 0; t < n.targets.size(); ++t)
        if (!ids.contains(n.targets[t]))
          throw ScenarioError(ptr(ptr(where, "targets"), t), "unknown agent '" + n.targets[t] + "'");
      s.news.push_back(std::move(n));
    }
  }

  s.generator = parse_generator(require(doc, "generator", ""), "/generator");

  const auto ablation = get_or<std::string>(doc, "ablation", "none", "");
  auto ab = ablation_from_string(ablation);
  if (!ab) throw ScenarioError("/ablation", "unknown ablation '" + ablation + "'");
  s.agent.ablation = *ab;

  if (auto it = doc.find("agent_settings"); it != doc.end()) {
    const std::string w = "/agent_settings";
    require_object(*it, w);
    s.agent.expert_iterations = get_or<int>(*it, "expert_iterations", s.agent.expert_iterations, w);
    s.agent.parse_retries = get_or<int>(*it, "parse_retries", s.agent.parse_retries, w);
    s.agent.expert_backend = get_or<std::string>(*it, "expert_backend", s.agent.expert_backend, w);
    s.advice_cap = get_or<std::size_t>(*it, "advice_cap", s.advice_cap, w);
    if (s.agent.expert_iterations < 0) throw ScenarioError(w + "/expert_iterations", "must be >= 0");
    if (s.agent.parse_retries < 0) throw ScenarioError(w + "/parse_retries", "must be >= 0");
  }

  if (auto it = doc.find("redactions"); it != doc.end()) {
    require_array(*it, "/redactions");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto where = ptr("/redactions", i);
      require_object((*it)[i], where);
      llm::Redaction r{get<std::string>((*it)[i], "from", where), get<std::string>((*it)[i], "to", where)};
      if (r.from.empty()) throw ScenarioError(ptr(where, "from"), "must not be empty");
      s.redactions.push_back(std::move(r));
    }
  }

  std::set<std::string> backend_ids;
  if (auto it = doc.find("backends"); it != doc.end()) {
    require_array(*it, "/backends");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto where = ptr("/backends", i);
      require_object((*it)[i], where);
      auto spec = at_path(where, [&] { return llm::backend_spec_from_json((*it)[i]); });
      if (!backend_ids.insert(spec.id).second)
        throw ScenarioError(ptr(where, "id"), "duplicate backend id '" + spec.id + "'");
      s.backends.push_back(std::move(spec));
    }
  }

  if (auto it = doc.find("reference"); it != doc.end()) s.reference = parse_reference(*it, "/reference");
  if (!s.reference.liquidation_agent.empty() && !ids.contains(s.reference.liquidation_agent))
    throw ScenarioError("/reference/liquidation_agent", "unknown agent '" + s.reference.liquidation_agent + "'");

  s.seed = get_or<std::uint64_t>(doc, "seed", 1, "");
  s.deterministic = get_or<bool>(doc, "deterministic", true, "");
  return s;
}

Scenario load_scenario(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path.string(), "cannot open scenario file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str(), path.parent_path());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ":" + e.where(), std::string(e.what()).substr(e.where().size() + 2));
  }
}

ordered_json scenario_to_json(const Scenario& s) {
  ordered_json j;
  j["name"] = s.name;
  j["description"] = s.description;
  j["engine"] = s.engine;
  ordered_json roster = ordered_json::array();
  for (const auto& r : s.roster) {
    auto p = profile_to_json(r.profile);
    p["cash"] = static_cast<double>(r.account.cash) / kCentsPerUnit;
    p["position"] = r.account.position;
    roster.push_back(std::move(p));
  }
  j["roster"] = std::move(roster);
  ordered_json news = ordered_json::array();
  for (const auto& n : s.news) news.push_back(news_to_json(n));
  j["news"] = std::move(news);

  ordered_json g;
  if (!s.generator.history.empty()) {
    g["history"] = s.generator.history;
    g["k"] = s.generator.fit.k;
    g["seed"] = s.generator.fit.seed;
    g["window"] = s.generator.fit.window;
    g["volume_from_data"] = s.generator.fit.volume_from_data;
  } else {
    g["model"] = s.generator.model;
  }
  if (s.generator.mu_v) g["mu_v"] = *s.generator.mu_v;
  if (s.generator.sigma_v) g["sigma_v"] = *s.generator.sigma_v;
  if (s.generator.aggressive_mult) g["aggressive_mult"] = *s.generator.aggressive_mult;
  if (s.generator.conservative_mult) g["conservative_mult"] = *s.generator.conservative_mult;
  if (s.generator.max_orders) g["max_orders"] = *s.generator.max_orders;
  j["generator"] = std::move(g);

  j["ablation"] = to_string(s.agent.ablation);
  j["agent_settings"] = {{"expert_iterations", s.agent.expert_iterations},
                         {"parse_retries", s.agent.parse_retries},
                         {"expert_backend", s.agent.expert_backend},
                         {"advice_cap", s.advice_cap}};
  ordered_json red = ordered_json::array();
  for (const auto& r : s.redactions) red.push_back({{"from", r.from}, {"to", r.to}});
  j["redactions"] = std::move(red);
  ordered_json backends = ordered_json::array();
  for (const auto& b : s.backends) backends.push_back(llm::backend_spec_to_json(b));
  j["backends"] = std::move(backends);

  ordered_json ref;
  if (s.reference.growth_rate) ref["growth_rate"] = *s.reference.growth_rate;
  if (!s.reference.actual_settlements.empty()) ref["actual_settlements"] = s.reference.actual_settlements;
  if (s.reference.liquidation_plateau) ref["liquidation_plateau"] = *s.reference.liquidation_plateau;
  if (!s.reference.liquidation_agent.empty()) ref["liquidation_agent"] = s.reference.liquidation_agent;
  if (!s.reference.note.empty()) ref["note"] = s.reference.note;
  if (!ref.empty()) j["reference"] = std::move(ref);

  j["seed"] = s.seed;
  j["deterministic"] = s.deterministic;
  return j;
}

GeneratorModel resolve_generator(const Scenario& s) {
  const auto& g = s.generator;
  GeneratorModel m;
  if (!g.history.empty()) {
    const auto path = s.base_dir / g.history;
    m = at_path("/generator/history", [&] { return fit_generator(PriceHistory::load_csv(path), g.fit); });
  } else {
    m = at_path("/generator/model", [&] { return load_model(s.base_dir / g.model); });
  }
  if (g.mu_v) m.mu_v = *g.mu_v;
  if (g.sigma_v) m.sigma_v = *g.sigma_v;
  if (g.aggressive_mult) m.aggressive_mult = *g.aggressive_mult;
  if (g.conservative_mult) m.conservative_mult = *g.conservative_mult;
  if (g.max_orders) m.max_orders = *g.max_orders;
  return m;
}

std::vector<llm::BackendSpec> load_backends_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open backend config " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto& list = doc.is_array() ? doc : require(doc, "backends", "");
  std::vector<llm::BackendSpec> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    auto spec = at_path(path.string() + ":" + ptr("/backends", i),
                        [&] { return llm::backend_spec_from_json(list[i]); });
    if (!spec.script.empty() && fs::path(spec.script).is_relative())
      spec.script = (path.parent_path() / spec.script).string();
    out.push_back(std::move(spec));
  }
  return out;
}

PreparedRun prepare_run(const Scenario& s, const RunOptions& opts) {
  PreparedRun run;
  run.records = std::make_shared<RecordSet>();
  run.gateway = std::make_shared<llm::Gateway>(run.records);
  run.gateway->set_redactions(s.redactions);
  run.gateway->set_advice_cap(s.advice_cap);

  std::vector<std::pair<llm::BackendSpec, fs::path>> specs;
  for (const auto& b : s.backends) specs.emplace_back(b, s.base_dir);
  for (const auto& b : opts.backends) {
    auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& p) { return p.first.id == b.id; });
    if (it != specs.end())
      *it = {b, fs::path{}};
    else
      specs.emplace_back(b, fs::path{});
  }
  for (const auto& [spec, dir] : specs)
    run.gateway->register_backend(spec, at_path("/backends/" + spec.id, [&] { return llm::make_backend(spec, dir); }));

  AgentSettings settings = s.agent;
  if (opts.ablation) settings.ablation = *opts.ablation;
  for (std::size_t i = 0; i < s.roster.size(); ++i) {
    const auto& p = s.roster[i].profile;
    if (p.human_proxy) continue;
    if (!run.gateway->has_backend(p.backend))
      throw ScenarioError(ptr("/roster", i) + "/backend", "no backend named '" + p.backend + "'");
    const auto expert = p.expert_backend.empty() ? settings.expert_backend : p.expert_backend;
    const bool needs_expert = !settings.ablation.no_expert && settings.expert_iterations > 0;
    if (needs_expert && !run.gateway->has_backend(expert))
      throw ScenarioError(ptr("/roster", i) + "/expert_backend", "no backend named '" + expert + "'");
  }

  SimulationConfig cfg;
  cfg.name = s.name;
  cfg.engine = s.engine;
  cfg.roster = s.roster;
  cfg.news = s.news;
  cfg.generator = resolve_generator(s);
  cfg.agent = settings;
  cfg.deterministic = opts.deterministic.value_or(s.deterministic);
  cfg.seed = opts.seed.value_or(s.seed);
  if (opts.seed) cfg.engine.rng_seed = *opts.seed;
  auto prompts = opts.prompts ? *opts.prompts : llm::PromptSet::builtin();
  run.simulation = std::make_unique<Simulation>(std::move(cfg), run.gateway, std::move(prompts), run.records);
  return run;
}

} // namespace mtsim
