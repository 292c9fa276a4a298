#include "mtsim/service/run_manager.hpp"

#include <ctime>

#include "mtsim/metrics/metrics.hpp"
#include "mtsim/service/batch.hpp"

namespace mtsim {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string_view to_string(RunState s) noexcept {
  switch (s) {
    case RunState::Configuring: return "configuring";
    case RunState::Running: return "running";
    case RunState::Paused: return "paused";
    case RunState::Halted: return "halted";
    case RunState::Finished: return "finished";
  }
  return "configuring";
}

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ApiResult error(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

} // namespace

ManagedRun::ManagedRun(std::string id, Scenario scenario, ManagedRunOptions opts)
    : id_(std::move(id)), scenario_(std::move(scenario)), opts_(std::move(opts)), created_at_(utc_now()) {
  run_ = prepare_run(scenario_, opts_.run);
  fs::create_directories(opts_.log_dir);
  log_path_ = opts_.log_dir / "records.jsonl";
  sink_.open(log_path_, std::ios::binary | std::ios::trunc);
  if (!sink_) throw std::runtime_error("cannot write " + log_path_.string());
  run_.records->set_sink(&sink_);
  observer_ = run_.records->add_observer([this](const Record& r) { on_record(r); });
}

ManagedRun::~ManagedRun() {
  halt();
  wait();
  run_.records->remove_observer(observer_);
  run_.records->set_sink(nullptr);
}

RunState ManagedRun::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

ordered_json ManagedRun::handle() const {
  std::lock_guard lock(mu_);
  return {{"id", id_},
          {"scenario", scenario_.name},
          {"state", to_string(state_)},
          {"frame", frame_},
          {"turn", turn_},
          {"created_at", created_at_},
          {"log", log_path_.string()}};
}

ordered_json ManagedRun::state_json() const {
  auto j = handle();
  std::lock_guard lock(mu_);
  j["phase"] = phase_;
  j["pause_pending"] = pause_requested_;
  j["window_open"] = window_open_;
  if (window_open_) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(window_deadline_ - Clock::now());
    j["window_remaining_ms"] = std::max<std::int64_t>(left.count(), 0);
  }
  j["market"] = market_;
  if (!error_.empty()) j["error"] = error_;
  return j;
}

void ManagedRun::on_record(const Record& r) {
  const auto& type = r.at("type").get_ref<const std::string&>();
  {
    std::lock_guard lock(mu_);
    if (type == "frame_start") {
      frame_ = r.at("frame").get<int>();
      turn_ = 0;
      phase_ = "analysis";
    } else if (type == "turn_open") {
      turn_ = r.at("turn").get<int>();
      phase_ = "turn";
    } else if (type == "turn_closed") {
      phase_ = "withdrawal";
    } else if (type == "settlement") {
      phase_ = "settlement";
    } else if (type == "run_end") {
      phase_ = "ended";
    } else {
      return;
    }
  }
  cv_.notify_all();
}

std::optional<std::string> ManagedRun::start() {
  std::lock_guard lock(mu_);
  if (state_ == RunState::Paused) {
    state_ = RunState::Running;
    cv_.notify_all();
    return std::nullopt;
  }
  if (state_ != RunState::Configuring) return "cannot start a run that is " + std::string(to_string(state_));
  state_ = RunState::Running;
  thread_ = std::thread([this] { thread_main(); });
  return std::nullopt;
}

std::optional<std::string> ManagedRun::pause() {
  std::lock_guard lock(mu_);
  if (state_ != RunState::Running) return "cannot pause a run that is " + std::string(to_string(state_));
  pause_requested_ = true;
  return std::nullopt;
}

std::optional<std::string> ManagedRun::halt() {
  std::lock_guard lock(mu_);
  if (state_ == RunState::Halted || state_ == RunState::Finished)
    return "run is already " + std::string(to_string(state_));
  halt_requested_ = true;
  if (state_ == RunState::Configuring) state_ = RunState::Halted;
  cv_.notify_all();
  return std::nullopt;
}

std::optional<std::string> ManagedRun::advance() {
  std::lock_guard lock(mu_);
  if (!window_open_) return "no trading window is open";
  advance_requested_ = true;
  cv_.notify_all();
  return std::nullopt;
}

void ManagedRun::wait() {
  if (thread_.joinable()) thread_.join();
}

bool ManagedRun::wait_for(const std::function<bool(const ordered_json&)>& pred, std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  while (Clock::now() < deadline) {
    if (pred(state_json())) return true;
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, std::chrono::milliseconds(20));
  }
  return pred(state_json());
}

bool ManagedRun::is_proxy(const std::string& agent) const {
  for (const auto& r : scenario_.roster)
    if (r.profile.id == agent) return r.profile.human_proxy;
  return false;
}

void ManagedRun::thread_main() {
  SimulationHooks hooks;
  hooks.before_turn = [this](int f, int t) { return before_turn(f, t); };
  hooks.trading_window = [this](Engine& e, int f, int t) { trading_window(e, f, t); };
  hooks.frame_settled = [this](const SettlementReport&) {
    auto m = snapshot_to_json(run_.simulation->engine().snapshot_market());
    std::lock_guard lock(mu_);
    market_ = std::move(m);
  };
  RunOutcome outcome = RunOutcome::Halted;
  std::string err;
  try {
    outcome = run_.simulation->run(hooks);
  } catch (const std::exception& e) {
    err = e.what();
  }
  sink_.flush();
  std::deque<std::shared_ptr<Command>> orphans;
  {
    std::lock_guard lock(mu_);
    state_ = outcome == RunOutcome::Finished && err.empty() ? RunState::Finished : RunState::Halted;
    error_ = err;
    window_open_ = false;
    orphans.swap(commands_);
  }
  for (auto& c : orphans) c->done.set_value(error(409, "run ended"));
  cv_.notify_all();
}

bool ManagedRun::before_turn(int, int) {
  auto m = snapshot_to_json(run_.simulation->engine().snapshot_market());
  std::unique_lock lock(mu_);
  market_ = std::move(m);
  if (pause_requested_ && !halt_requested_) {
    pause_requested_ = false;
    state_ = RunState::Paused;
    cv_.notify_all();
    cv_.wait(lock, [this] { return state_ != RunState::Paused || halt_requested_; });
  }
  return !halt_requested_;
}

void ManagedRun::trading_window(Engine& engine, int, int) {
  bool proxies = false;
  for (const auto& r : scenario_.roster) proxies = proxies || r.profile.human_proxy;
  const auto window = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(proxies ? opts_.turn_window_s : 0.0));

  std::unique_lock lock(mu_);
  window_open_ = true;
  phase_ = "trading_window";
  window_deadline_ = Clock::now() + window;
  cv_.notify_all();
  for (;;) {
    cv_.wait_until(lock, window_deadline_,
                   [this] { return !commands_.empty() || halt_requested_ || advance_requested_; });
    while (!commands_.empty()) {
      auto c = commands_.front();
      commands_.pop_front();
      lock.unlock();
      c->done.set_value(execute(engine, *c));
      lock.lock();
    }
    if (halt_requested_ || advance_requested_ || Clock::now() >= window_deadline_) break;
  }
  window_open_ = false;
  advance_requested_ = false;
  phase_ = "matching";
  cv_.notify_all();
}

ApiResult ManagedRun::execute(Engine& engine, Command& c) {
  const auto& b = c.body;
  try {
    const auto agent = b.at("agent").get<std::string>();
    if (!engine.has_account(agent)) return error(422, "unknown_agent");
    if (!is_proxy(agent)) return error(422, "agent '" + agent + "' is not a human proxy");
    if (c.kind == Command::Kind::Order) {
      OrderRequest req;
      req.agent = agent;
      auto side = side_from_string(b.at("side").get<std::string>());
      if (!side) return error(422, "side must be buy or sell");
      req.side = *side;
      req.price = b.at("price").get<Price>();
      req.volume = b.at("volume").get<Qty>();
      const auto res = engine.submit(req, OrderOrigin::Human);
      if (!res.accepted)
        return {422, {{"id", res.id}, {"accepted", false}, {"error", std::string(to_string(res.reason))}}};
      return {200, {{"id", res.id}, {"accepted", true}, {"frame", engine.frame()}, {"turn", engine.turn()}}};
    }
    const auto ids = b.at("orders").get<std::vector<OrderId>>();
    const auto results = engine.withdraw_orders(agent, ids);
    ordered_json out = ordered_json::array();
    bool any = false;
    for (const auto& r : results) {
      any = any || r.error == WithdrawError::None;
      ordered_json item{{"id", r.id}, {"withdrawn", r.error == WithdrawError::None}};
      if (r.error == WithdrawError::None)
        item["residual"] = r.residual;
      else
        item["error"] = std::string(to_string(r.error));
      out.push_back(std::move(item));
    }
    return {any ? 200 : 422, {{"results", out}}};
  } catch (const json::exception& e) {
    return error(422, std::string("malformed request: ") + e.what());
  }
}

ApiResult ManagedRun::enqueue(Command::Kind kind, const json& body, std::chrono::milliseconds wait) {
  auto cmd = std::make_shared<Command>();
  cmd->kind = kind;
  cmd->body = body;
  auto fut = cmd->done.get_future();
  {
    std::lock_guard lock(mu_);
    if (state_ != RunState::Running) return error(409, "run is " + std::string(to_string(state_)));
    if (!window_open_) return error(409, "no trading window is open");
    commands_.push_back(cmd);
  }
  cv_.notify_all();
  if (fut.wait_for(wait) != std::future_status::ready) return error(504, "simulation did not respond");
  return fut.get();
}

ApiResult ManagedRun::submit_order(const json& body, std::chrono::milliseconds wait) {
  return enqueue(Command::Kind::Order, body, wait);
}

ApiResult ManagedRun::withdraw(const json& body, std::chrono::milliseconds wait) {
  return enqueue(Command::Kind::Withdraw, body, wait);
}

ApiResult ManagedRun::inject_event(const json& body) {
  {
    std::lock_guard lock(mu_);
    if (state_ == RunState::Halted || state_ == RunState::Finished)
      return error(409, "run is " + std::string(to_string(state_)));
  }
  NewsItem item;
  try {
    item = news_from_json(body);
  } catch (const std::exception& e) {
    return error(422, std::string("malformed event: ") + e.what());
  }
  try {
    const bool deferred = run_.simulation->inject_event(item);
    return {202, {{"queued_for", item.frame}, {"deferred", deferred}}};
  } catch (const LateEventError& e) {
    return error(409, e.what());
  } catch (const ConfigError& e) {
    return error(422, e.what());
  }
}

ordered_json ManagedRun::metrics() const {
  const auto events = run_.records->snapshot();
  const auto opts = export_options_for(scenario_);
  auto j = run_summary(events, opts);
  ordered_json groups = ordered_json::array();
  for (int r = 1; r <= rounds_in(events); ++r) {
    ordered_json g{{"round", r}};
    for (const char* s : {"aggressive", "conservative", "custom"})
      if (auto v = group_behaviour_index(events, s, r)) g[s] = *v;
    groups.push_back(std::move(g));
  }
  j["behaviour_groups"] = std::move(groups);
  if (!opts.liquidation_agent.empty()) {
    ordered_json series = ordered_json::array();
    for (const auto& p : liquidation_series(events, opts.liquidation_agent)) series.push_back(p.value);
    j["liquidation_series"] = std::move(series);
  }
  return j;
}

// --- manager --------------------------------------------------------------

std::pair<std::string, std::map<std::string, std::string>> split_target(const std::string& target) {
  std::map<std::string, std::string> query;
  const auto q = target.find('?');
  const std::string path = target.substr(0, q);
  if (q != std::string::npos) {
    std::string rest = target.substr(q + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto amp = rest.find('&', pos);
      if (amp == std::string::npos) amp = rest.size();
      const auto kv = rest.substr(pos, amp - pos);
      const auto eq = kv.find('=');
      if (!kv.empty()) query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
      pos = amp + 1;
    }
  }
  return {path, query};
}

RunManager::RunManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.backends_file.empty()) backends_ = load_backends_file(cfg_.backends_file);
}

RunManager::~RunManager() { shutdown(); }

void RunManager::shutdown() {
  std::map<std::string, std::shared_ptr<ManagedRun>> runs;
  {
    std::lock_guard lock(mu_);
    runs.swap(runs_);
  }
  for (auto& [id, r] : runs) {
    r->halt();
    r->wait();
  }
}

std::shared_ptr<ManagedRun> RunManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(id);
  return it == runs_.end() ? nullptr : it->second;
}

std::shared_ptr<ManagedRun> RunManager::create(const json& body, ApiResult& err) {
  try {
    if (!body.is_object() || !body.contains("scenario")) {
      err = error(422, "body needs 'scenario' (a path or an inline document)");
      return nullptr;
    }
    Scenario s;
    const auto& sc = body.at("scenario");
    if (sc.is_object())
      s = parse_scenario(sc.dump(), cfg_.scenario_root);
    else
      s = load_scenario(cfg_.scenario_root / sc.get<std::string>());

    ManagedRunOptions opts;
    opts.run.backends = backends_;
    if (body.contains("seed")) opts.run.seed = body.at("seed").get<std::uint64_t>();
    if (body.contains("deterministic")) opts.run.deterministic = body.at("deterministic").get<bool>();
    if (body.contains("ablation")) {
      auto ab = ablation_from_string(body.at("ablation").get<std::string>());
      if (!ab) {
        err = error(422, "unknown ablation");
        return nullptr;
      }
      opts.run.ablation = *ab;
    }
    opts.turn_window_s = body.value("turn_window_s", cfg_.turn_window_s);
    if (opts.turn_window_s < 0) {
      err = error(422, "turn_window_s must be >= 0");
      return nullptr;
    }
    std::string id;
    {
      std::lock_guard lock(mu_);
      id = "run-" + std::to_string(next_id_++);
    }
    opts.log_dir = cfg_.runs_dir / id;
    auto run = std::make_shared<ManagedRun>(id, std::move(s), std::move(opts));
    std::lock_guard lock(mu_);
    runs_.emplace(id, run);
    return run;
  } catch (const ScenarioError& e) {
    err = {422, {{"error", e.what()}, {"where", e.where()}}};
  } catch (const json::exception& e) {
    err = error(422, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    err = error(422, e.what());
  }
  return nullptr;
}

ApiResult RunManager::handle(const std::string& method, const std::string& target, const std::string& body) {
  const auto [path, query] = split_target(target);
  std::vector<std::string> parts;
  for (std::size_t pos = 1; pos <= path.size();) {
    auto slash = path.find('/', pos);
    if (slash == std::string::npos) slash = path.size();
    if (slash > pos) parts.push_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }

  json doc;
  if (method == "POST" && !body.empty()) {
    try {
      doc = json::parse(body);
    } catch (const json::parse_error& e) {
      return error(400, std::string("malformed JSON: ") + e.what());
    }
  }

  if (parts.size() == 1 && parts[0] == "health") return {200, {{"ok", true}}};
  if (parts.empty() || parts[0] != "runs") return error(404, "no such endpoint");

  if (parts.size() == 1) {
    if (method == "GET") {
      ordered_json list = ordered_json::array();
      std::lock_guard lock(mu_);
      for (const auto& [id, r] : runs_) list.push_back(r->handle());
      return {200, list};
    }
    if (method == "POST") {
      ApiResult err;
      auto run = create(doc, err);
      if (!run) return err;
      if (doc.value("autostart", false)) run->start();
      return {201, run->handle()};
    }
    return error(405, "method not allowed");
  }

  auto run = find(parts[1]);
  if (!run) return error(404, "unknown run '" + parts[1] + "'");
  if (parts.size() == 2) {
    if (method == "GET") return {200, run->handle()};
    return error(405, "method not allowed");
  }
  if (parts.size() != 3) return error(404, "no such endpoint");
  const auto& what = parts[2];

  if (method == "GET") {
    if (what == "state") return {200, run->state_json()};
    if (what == "metrics") return {200, run->metrics()};
    if (what == "records") {
      std::uint64_t since = 0;
      if (auto it = query.find("since"); it != query.end()) {
        try {
          since = std::stoull(it->second);
        } catch (const std::exception&) {
          return error(400, "since must be a number");
        }
      }
      ordered_json arr = ordered_json::array();
      for (auto& e : run->records().since(since)) arr.push_back(std::move(e));
      return {200, arr};
    }
    return error(404, "no such endpoint");
  }
  if (method != "POST") return error(405, "method not allowed");

  auto transition = [&](std::optional<std::string> err) -> ApiResult {
    if (err) return error(409, *err);
    return {200, run->handle()};
  };
  if (what == "start") return transition(run->start());
  if (what == "pause") return transition(run->pause());
  if (what == "halt") return transition(run->halt());
  if (what == "advance") return transition(run->advance());
  if (what == "events") return run->inject_event(doc);
  if (what == "orders") return run->submit_order(doc);
  if (what == "withdrawals") return run->withdraw(doc);
  return error(404, "no such endpoint");
}

} // namespace mtsim
