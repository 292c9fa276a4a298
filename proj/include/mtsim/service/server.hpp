#pragma once
#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mtsim/service/run_manager.hpp"

namespace mtsim {

struct ServerOptions {
  std::string host{"127.0.0.1"};
  // 0 picks a free port
  unsigned short port{8080};
  std::string backends_file;
  std::string scenario_root{"."};
  std::string runs_dir{"runs/service"};
  double turn_window_s{30.0};
  // per-subscriber backlog before the oldest frames are dropped
  std::size_t stream_buffer{4096};
};

// HTTP/JSON API plus a WebSocket event stream at /runs/{id}/stream.
// One thread per connection.
class Server {
public:
  explicit Server(ServerOptions opts);
  ~Server();

  unsigned short port() const noexcept { return port_; }
  RunManager& runs() noexcept { return *manager_; }

  // Accept loop; returns after stop().
  void run();
  void stop();

private:
  struct Impl;

  ServerOptions opts_;
  std::unique_ptr<RunManager> manager_;
  std::unique_ptr<Impl> impl_;
  unsigned short port_{0};
  std::atomic<bool> stopping_{false};
  std::mutex conn_mu_;
  std::vector<int> open_fds_;
  std::vector<std::thread> workers_;
};

} // namespace mtsim
