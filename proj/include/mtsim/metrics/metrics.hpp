#pragma once
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/core/types.hpp"
#include "mtsim/record/record_set.hpp"

namespace mtsim {

// Mean squared difference of return rates against s0.
// Throws std::invalid_argument on length mismatch, empty input or s0 <= 0.
double return_rate_mse(double s0, const std::vector<double>& actual, const std::vector<double>& predicted);

// |sim - ref| / ref
double relative_error(double sim, double ref);

struct GrowthReport {
  double first{0.0};
  double last{0.0};
  double increase{0.0};
  std::optional<double> reference;
  std::optional<double> relative_error;
};
GrowthReport growth_between(double first, double last, std::optional<double> reference = std::nullopt);
// From the initial price to the last settlement in the log.
GrowthReport growth_rate(const std::vector<Record>& records, std::optional<double> reference = std::nullopt);

// Settlement price per frame, in order.
std::vector<double> settlement_series(const std::vector<Record>& records);

struct BandPoint {
  int round{0};
  bool present{false};
  Price low{0};
  Price high{0};
  double avg{0.0};
  Qty volume{0};
};
struct PriceRanges {
  std::vector<BandPoint> bids;
  std::vector<BandPoint> asks;
};
// Accepted agent and human orders; forced orders are not quotes.
PriceRanges price_range_series(const std::vector<Record>& records);
// Rounds whose highest bid is above the highest ask.
std::vector<int> bid_over_ask_rounds(const PriceRanges& r);

struct ValuePoint {
  int round{0};
  double value{0.0};
};
// Cumulative currency value of forced liquidations of `agent`, per round.
// Throws ConfigError for an agent the log does not know.
std::vector<ValuePoint> liquidation_series(const std::vector<Record>& records, const AgentId& agent);
// Round of the first liquidation of `agent`, 0 if none.
int first_liquidation_round(const std::vector<Record>& records, const AgentId& agent);

struct ContractsPoint {
  int round{0};
  Qty volume{0};
  Qty forced_volume{0};
  std::size_t deals{0};
};
std::vector<ContractsPoint> completed_contracts(const std::vector<Record>& records);

struct BehaviourPoint {
  int round{0};
  AgentId agent;
  double index{0.0};
  Qty executed{0};
  // volume-weighted average price of the agent's orders in the round
  double vwap{0.0};
  Qty affordable{0};
  Qty position_start{0};
  // nothing affordable and nothing to close; index reported as 0
  bool zero_capacity{false};
};
// executed / (max affordable at the round's VWAP with the round-start
// account + |round-start position|), clamped to [0, 1].
BehaviourPoint trading_behaviour_index(const std::vector<Record>& records, const AgentId& agent, int round);
// Mean over non-proxy agents of the style ("aggressive", ...); nullopt when
// the group is empty.
std::optional<double> group_behaviour_index(const std::vector<Record>& records, const std::string& style, int round);

// Number of settled frames.
int rounds_in(const std::vector<Record>& records);

struct ExportOptions {
  std::string liquidation_agent;
  std::optional<double> reference_growth;
};
// Writes settlements.csv, price_ranges.csv, contracts.csv,
// behaviour_index.csv, behaviour_groups.csv, liquidation.csv and
// summary.json. Returns the summary.
nlohmann::ordered_json export_tables(const std::vector<Record>& records, const std::filesystem::path& dir,
                                     const ExportOptions& opts = {});
nlohmann::ordered_json run_summary(const std::vector<Record>& records, const ExportOptions& opts = {});

} // namespace mtsim
