#include "mtsim/agent/simulation.hpp"

#include <algorithm>
#include <future>
#include <set>

namespace mtsim {

using nlohmann::ordered_json;

std::uint64_t agent_seed(std::uint64_t seed, std::size_t index) noexcept {
  // splitmix64 of (seed, index)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::vector<AccountInit> accounts_of(const std::vector<RosterEntry>& roster) {
  std::vector<AccountInit> out;
  for (const auto& r : roster) {
    if (r.account.agent != r.profile.id)
      throw ConfigError("roster: account id '" + r.account.agent + "' does not match profile '" + r.profile.id + "'");
    out.push_back(r.account);
  }
  return out;
}

} // namespace

Simulation::Simulation(SimulationConfig config, std::shared_ptr<llm::Gateway> gateway, llm::PromptSet prompts,
                       std::shared_ptr<RecordSet> records)
    : config_(std::move(config)),
      records_(std::move(records)),
      gateway_(std::move(gateway)),
      prompts_(std::move(prompts)),
      engine_(config_.engine, accounts_of(config_.roster), records_) {
  for (const auto& r : config_.roster) r.profile.validate();
  AgentServices services{gateway_.get(), &prompts_, &config_.generator, records_.get(), config_.agent};
  for (std::size_t i = 0; i < config_.roster.size(); ++i)
    agents_.push_back(std::make_unique<Agent>(config_.roster[i].profile, services, agent_seed(config_.seed, i)));
  for (const auto& n : config_.news) inject_event(n);
}

Agent* Simulation::agent(const AgentId& id) {
  for (auto& a : agents_)
    if (a->id() == id) return a.get();
  return nullptr;
}

bool Simulation::inject_event(NewsItem item) {
  if (item.frame < 1 || item.frame > config_.engine.d_sim)
    throw ConfigError("event frame " + std::to_string(item.frame) + " outside 1.." +
                      std::to_string(config_.engine.d_sim));
  for (const auto& t : item.targets)
    if (!agent(t)) throw ConfigError("event targets unknown agent '" + t + "'");
  std::lock_guard lock(news_mu_);
  const int current = frame_.load();
  if (item.frame < current || (item.frame == current && frame_settled_.load()))
    throw LateEventError("frame " + std::to_string(item.frame) + " has already been settled");
  const bool later = item.frame > current;
  pending_.push_back(std::move(item));
  return later;
}

void Simulation::deliver_news(int frame, int turn) {
  std::vector<NewsItem> due;
  {
    std::lock_guard lock(news_mu_);
    auto it = std::stable_partition(pending_.begin(), pending_.end(),
                                    [frame](const NewsItem& n) { return n.frame > frame; });
    due.assign(std::make_move_iterator(it), std::make_move_iterator(pending_.end()));
    pending_.erase(it, pending_.end());
  }
  for (auto& n : due) {
    auto ev = news_to_json(n);
    ev["frame"] = frame;
    ev["turn"] = turn;
    ordered_json delivered = ordered_json::array();
    for (const auto& a : agents_)
      if (n.addressed_to(a->id())) delivered.push_back(a->id());
    ev["delivered_to"] = delivered;
    records_->append("news_event", std::move(ev));
    frame_items_.push_back(std::move(n));
  }
}

ObservationBundle Simulation::observation_for(const Agent& a) const {
  ObservationBundle obs;
  obs.frame = engine_.frame();
  obs.d_sim = config_.engine.d_sim;
  for (const auto& n : frame_items_)
    if (n.addressed_to(a.id())) obs.items.push_back(n);
  obs.market = engine_.snapshot_market();
  obs.settlements = settlements_;
  return obs;
}

template <class Fn>
void Simulation::for_each_agent(Fn&& fn) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < agents_.size(); ++i)
    if (!agents_[i]->profile().human_proxy) active.push_back(i);
  if (config_.deterministic) {
    for (auto i : active) fn(*agents_[i], i);
    return;
  }
  std::vector<std::future<void>> tasks;
  for (auto i : active) tasks.push_back(std::async(std::launch::async, [this, &fn, i] { fn(*agents_[i], i); }));
  for (auto& t : tasks) t.get();
}

void Simulation::run_turn(int frame, int turn, const SimulationHooks& hooks) {
  engine_.open_turn();
  deliver_news(frame, turn);

  std::vector<std::vector<OrderRequest>> planned(agents_.size());
  for_each_agent([&](Agent& a, std::size_t i) {
    const auto obs = observation_for(a);
    const auto& acct = engine_.account(a.id());
    const Qty capacity = engine_.max_affordable(a.id(), obs.market.last_price);
    const auto init = a.form_strategy(acct, capacity, obs, turn);
    const auto fin = a.refine_strategy(init, obs);
    planned[i] = a.act(fin, acct, obs, config_.engine);
  });
  for (auto& orders : planned)
    if (!orders.empty()) engine_.submit_orders(std::move(orders), OrderOrigin::Agent);

  if (hooks.trading_window) hooks.trading_window(engine_, frame, turn);

  const auto deals = engine_.match_turn();
  std::vector<std::vector<OrderId>> withdrawals(agents_.size());
  for_each_agent([&](Agent& a, std::size_t i) {
    std::vector<Deal> own;
    for (const auto& d : deals)
      if (d.buyer == a.id() || d.seller == a.id()) own.push_back(d);
    std::vector<OrderRequest> resting;
    for (OrderId id : engine_.resting_orders_of(a.id())) resting.push_back(engine_.order(id));
    withdrawals[i] = a.decide_withdraw(frame, turn, own, resting);
  });
  for (std::size_t i = 0; i < agents_.size(); ++i)
    if (!withdrawals[i].empty()) engine_.withdraw_orders(agents_[i]->id(), withdrawals[i]);
}

RunOutcome Simulation::run(const SimulationHooks& hooks) {
  ordered_json roster = ordered_json::array();
  for (const auto& r : config_.roster) roster.push_back(profile_to_json(r.profile));
  records_->append("run_start", {{"name", config_.name},
                                 {"seed", config_.seed},
                                 {"deterministic", config_.deterministic},
                                 {"ablation", to_string(config_.agent.ablation)},
                                 {"expert_iterations", config_.agent.expert_iterations},
                                 {"parse_retries", config_.agent.parse_retries},
                                 {"prompt_version", prompts_.version()},
                                 {"generator", model_to_json(config_.generator)},
                                 {"roster", roster}});

  RunOutcome outcome = RunOutcome::Finished;
  for (int frame = 1; frame <= config_.engine.d_sim && outcome == RunOutcome::Finished; ++frame) {
    engine_.open_frame();
    {
      std::lock_guard lock(news_mu_);
      frame_.store(frame);
      frame_settled_.store(false);
    }
    frame_items_.clear();
    deliver_news(frame, 0);
    for_each_agent([&](Agent& a, std::size_t) { a.analyze(observation_for(a)); });

    for (int turn = 1; turn <= config_.engine.d_turn; ++turn) {
      if (hooks.before_turn && !hooks.before_turn(frame, turn)) {
        outcome = RunOutcome::Halted;
        break;
      }
      run_turn(frame, turn, hooks);
    }
    if (outcome == RunOutcome::Halted) break;

    const auto report = engine_.settle_frame();
    {
      std::lock_guard lock(news_mu_);
      frame_settled_.store(true);
    }
    settlements_.push_back(report.price);
    for_each_agent([&](Agent& a, std::size_t) {
      std::vector<OrderRequest> own;
      for (const auto& [id, o] : engine_.orders())
        if (o.agent == a.id() && o.frame == frame && o.origin == OrderOrigin::Agent) own.push_back(o);
      std::sort(own.begin(), own.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
      a.reflect(frame, own, report, engine_.account(a.id()));
    });
    if (hooks.frame_settled) hooks.frame_settled(report);
  }
  records_->append("run_end", {{"status", outcome == RunOutcome::Finished ? "finished" : "halted"},
                               {"frames", static_cast<int>(settlements_.size())},
                               {"model_calls", gateway_->calls()}});
  return outcome;
}

} // namespace mtsim
