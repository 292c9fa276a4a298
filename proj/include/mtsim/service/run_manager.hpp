#pragma once
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "mtsim/scenario/scenario.hpp"

namespace mtsim {

enum class RunState { Configuring, Running, Paused, Halted, Finished };
std::string_view to_string(RunState s) noexcept;

struct ApiResult {
  int status{200};
  nlohmann::ordered_json body;
};

struct ManagedRunOptions {
  RunOptions run;
  // seconds the human order window stays open per turn; 0 = unpaced
  double turn_window_s{0.0};
  std::filesystem::path log_dir;
};

// One simulation owned by the service. The simulation thread is the only
// writer of the engine; API calls that touch it are queued and executed in
// the turn's trading window.
class ManagedRun {
public:
  ManagedRun(std::string id, Scenario scenario, ManagedRunOptions opts);
  ~ManagedRun();
  ManagedRun(const ManagedRun&) = delete;
  ManagedRun& operator=(const ManagedRun&) = delete;

  const std::string& id() const noexcept { return id_; }
  RunState state() const;
  nlohmann::ordered_json handle() const;
  nlohmann::ordered_json state_json() const;

  // nullopt on success, else why the transition is invalid
  std::optional<std::string> start();
  std::optional<std::string> pause();
  std::optional<std::string> halt();
  // closes the current trading window early
  std::optional<std::string> advance();

  ApiResult submit_order(const nlohmann::json& body, std::chrono::milliseconds wait = std::chrono::seconds(30));
  ApiResult withdraw(const nlohmann::json& body, std::chrono::milliseconds wait = std::chrono::seconds(30));
  ApiResult inject_event(const nlohmann::json& body);
  nlohmann::ordered_json metrics() const;

  RecordSet& records() { return *run_.records; }
  const Scenario& scenario() const noexcept { return scenario_; }
  const std::filesystem::path& log_path() const noexcept { return log_path_; }
  // Blocks until the simulation thread has ended (or returns at once if it
  // never started).
  void wait();
  // Waits for `pred(state_json())`, polling on every state change.
  bool wait_for(const std::function<bool(const nlohmann::ordered_json&)>& pred, std::chrono::milliseconds timeout);

private:
  struct Command {
    enum class Kind { Order, Withdraw } kind;
    nlohmann::json body;
    std::promise<ApiResult> done;
  };

  void thread_main();
  bool before_turn(int frame, int turn);
  void trading_window(Engine& engine, int frame, int turn);
  ApiResult execute(Engine& engine, Command& c);
  ApiResult enqueue(Command::Kind kind, const nlohmann::json& body, std::chrono::milliseconds wait);
  void on_record(const Record& r);
  bool is_proxy(const std::string& agent) const;

  std::string id_;
  Scenario scenario_;
  ManagedRunOptions opts_;
  std::string created_at_;
  std::filesystem::path log_path_;
  std::ofstream sink_;
  PreparedRun run_;
  std::uint64_t observer_{0};

  mutable std::mutex mu_;
  std::condition_variable cv_;
  RunState state_{RunState::Configuring};
  bool pause_requested_{false};
  bool halt_requested_{false};
  bool advance_requested_{false};
  bool window_open_{false};
  std::chrono::steady_clock::time_point window_deadline_{};
  int frame_{0};
  int turn_{0};
  std::string phase_{"idle"};
  nlohmann::ordered_json market_;
  std::string error_;
  std::deque<std::shared_ptr<Command>> commands_;
  std::thread thread_;
};

struct ServiceConfig {
  std::filesystem::path scenario_root{"."};
  std::filesystem::path runs_dir{"runs/service"};
  std::string backends_file;
  double turn_window_s{30.0};
};

// Routes the JSON API; transport-independent so it can be tested directly.
class RunManager {
public:
  explicit RunManager(ServiceConfig cfg);
  ~RunManager();

  ApiResult handle(const std::string& method, const std::string& target, const std::string& body);

  std::shared_ptr<ManagedRun> find(const std::string& id) const;
  std::shared_ptr<ManagedRun> create(const nlohmann::json& body, ApiResult& error);
  void shutdown();

private:
  ServiceConfig cfg_;
  std::vector<llm::BackendSpec> backends_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<ManagedRun>> runs_;
  int next_id_{1};
};

// "/runs/abc/stream?since=4" -> {"/runs/abc/stream", {"since": "4"}}
std::pair<std::string, std::map<std::string, std::string>> split_target(const std::string& target);

} // namespace mtsim
