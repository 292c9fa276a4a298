#pragma once
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mtsim/agent/profile.hpp"
#include "mtsim/agent/types.hpp"
#include "mtsim/generator/generator.hpp"
#include "mtsim/llm/gateway.hpp"
#include "mtsim/llm/structured.hpp"

namespace mtsim {

struct Ablation {
  bool no_expert{false};
  bool no_generator{false};

  bool operator==(const Ablation&) const = default;
};
std::string to_string(const Ablation& a);
// none | no_expert | no_generator | both
std::optional<Ablation> ablation_from_string(std::string_view s);

struct AgentSettings {
  Ablation ablation;
  int expert_iterations{2};
  int parse_retries{3};
  // used when a profile names no expert of its own
  std::string expert_backend{"expert"};
};

// Shared, read-only collaborators of every agent in a run.
struct AgentServices {
  llm::Gateway* gateway{nullptr};
  const llm::PromptSet* prompts{nullptr};
  const GeneratorModel* generator{nullptr};
  RecordSet* records{nullptr};
  AgentSettings settings;
};

// One language-model-driven participant. Not thread-safe; the simulation
// gives each agent to one thread at a time.
class Agent {
public:
  Agent(AgentProfile profile, const AgentServices& services, std::uint64_t seed);

  const AgentProfile& profile() const noexcept { return profile_; }
  const AgentId& id() const noexcept { return profile_.id; }
  const MarketAssessment& assessment() const noexcept { return assessment_; }
  const Reflection& last_reflection() const noexcept { return reflection_; }
  const std::vector<TradingStrategy>& frame_strategies() const noexcept { return strategies_; }

  MarketAssessment analyze(const ObservationBundle& obs);
  // `capacity` is the affordable volume at the market price.
  TradingStrategy form_strategy(const Account& account, Qty capacity, const ObservationBundle& obs, int turn);
  TradingStrategy refine_strategy(const TradingStrategy& init, const ObservationBundle& obs);
  std::vector<OrderRequest> act(const TradingStrategy& final_strategy, const Account& account,
                                const ObservationBundle& obs, const EngineConfig& config);
  std::vector<OrderId> decide_withdraw(int frame, int turn, const std::vector<Deal>& own_deals,
                                       const std::vector<OrderRequest>& resting);
  Reflection reflect(int frame, const std::vector<OrderRequest>& own_orders, const SettlementReport& report,
                     const Account& account);

  // Expert-free, model-free strategy used when nothing can be traded.
  static constexpr std::string_view kNoCapacity = "no affordable volume and no position";

private:
  struct Answer {
    std::optional<nlohmann::json> value;
    std::string text;
    std::string error;
    bool backend_failure{false};
  };

  Answer ask(std::vector<llm::ChatMessage> messages, llm::Schema schema, const llm::CallContext& ctx);
  std::vector<llm::ChatMessage> with_system(std::string user) const;
  std::string expert_id() const;
  void trace(std::string_view kind, int frame, int turn, nlohmann::ordered_json fields) const;
  void record_failure(const llm::CallContext& ctx, const std::string& error) const;
  void record_strategy(const TradingStrategy& s) const;

  AgentProfile profile_;
  AgentServices services_;
  std::mt19937_64 rng_;
  std::string system_prompt_;
  MarketAssessment assessment_;
  Reflection reflection_;
  std::vector<TradingStrategy> strategies_;
};

std::string observation_text(const ObservationBundle& obs);
std::string market_text(const ObservationBundle& obs);
std::string account_text(const Account& a, std::optional<Qty> capacity);

} // namespace mtsim
