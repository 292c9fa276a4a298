#pragma once
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mtsim/engine/engine.hpp"

namespace mtsim {

// Engine state rebuilt by re-executing the exchange commands found in a log.
struct ReplayResult {
  std::map<AgentId, Account> accounts;
  std::vector<Price> settlements;
  int frame{0};
  int turn{0};
  std::size_t events_applied{0};
  // the log ended mid-run or was cut by a bad line
  bool truncated{false};
  // 1-based line of the first unreadable line, 0 if none
  std::size_t bad_line{0};
  std::string error;
  // first point where the re-execution disagreed with the log
  std::string divergence;
};

ReplayResult replay_events(const std::vector<Record>& events);
ReplayResult replay_file(const std::filesystem::path& path);

// The accounts carried by the last settlement event of a log, as the engine
// holds them after settling.
std::map<AgentId, Account> logged_final_accounts(const std::vector<Record>& events);

struct GraphCounts {
  std::size_t agents{0};
  std::size_t orders{0};
  std::size_t deals{0};
  std::size_t events{0};
  std::size_t edges{0};
};
// nodes.csv: id,kind,label,frame,turn
// edges.csv: source,target,kind   (submitted | matched | observed)
GraphCounts export_graph(const std::vector<Record>& events, const std::filesystem::path& dir);

} // namespace mtsim
