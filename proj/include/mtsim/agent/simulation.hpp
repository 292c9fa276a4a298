#pragma once
#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtsim/agent/agent.hpp"
#include "mtsim/engine/engine.hpp"

namespace mtsim {

class LateEventError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RosterEntry {
  AgentProfile profile;
  AccountInit account;
};

struct SimulationConfig {
  std::string name;
  EngineConfig engine;
  std::vector<RosterEntry> roster;
  std::vector<NewsItem> news;
  GeneratorModel generator;
  AgentSettings agent;
  // serial agents in roster order; otherwise one task per agent
  bool deterministic{true};
  std::uint64_t seed{1};
};

enum class RunOutcome { Finished, Halted };

// Service-side control points. All run on the simulation thread.
struct SimulationHooks {
  // Before a turn opens. Returning false halts the run.
  std::function<bool(int frame, int turn)> before_turn;
  // After agent orders are in and before matching. Human orders go here.
  std::function<void(Engine&, int frame, int turn)> trading_window;
  std::function<void(const SettlementReport&)> frame_settled;
};

std::uint64_t agent_seed(std::uint64_t seed, std::size_t index) noexcept;

// Runs frames of analysis, trading turns, settlement and reflection over one
// engine. The gateway must write to the same RecordSet.
class Simulation {
public:
  Simulation(SimulationConfig config, std::shared_ptr<llm::Gateway> gateway, llm::PromptSet prompts,
             std::shared_ptr<RecordSet> records);

  RunOutcome run(const SimulationHooks& hooks = {});

  // Thread-safe. Returns true if the item waits for a later frame, false if
  // it goes out with the next observation. Throws LateEventError for frames
  // already settled and ConfigError for unknown targets or frames past d_sim.
  bool inject_event(NewsItem item);

  const SimulationConfig& config() const noexcept { return config_; }
  Engine& engine() noexcept { return engine_; }
  const Engine& engine() const noexcept { return engine_; }
  RecordSet& records() noexcept { return *records_; }
  std::shared_ptr<RecordSet> records_ptr() const noexcept { return records_; }
  const std::vector<std::unique_ptr<Agent>>& agents() const noexcept { return agents_; }
  Agent* agent(const AgentId& id);
  int current_frame() const noexcept { return frame_.load(); }
  const std::vector<Price>& settlements() const noexcept { return settlements_; }

private:
  void deliver_news(int frame, int turn);
  ObservationBundle observation_for(const Agent& a) const;
  template <class Fn>
  void for_each_agent(Fn&& fn);
  void run_turn(int frame, int turn, const SimulationHooks& hooks);

  SimulationConfig config_;
  std::shared_ptr<RecordSet> records_;
  std::shared_ptr<llm::Gateway> gateway_;
  llm::PromptSet prompts_;
  Engine engine_;
  std::vector<std::unique_ptr<Agent>> agents_;

  std::mutex news_mu_;
  std::vector<NewsItem> pending_;
  std::vector<NewsItem> frame_items_;
  std::atomic<int> frame_{0};
  std::atomic<bool> frame_settled_{false};
  std::vector<Price> settlements_;
};

} // namespace mtsim
