#include "mtsim/service/server.hpp"

#include <sys/socket.h>

#include <condition_variable>
#include <deque>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace mtsim {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::ordered_json;

namespace {

// Bounded fan-out queue for one stream subscriber; drops the oldest frame
// when the client falls behind. The log itself is never affected.
struct Subscriber {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::pair<std::uint64_t, std::string>> frames;
  std::size_t limit{4096};
  std::size_t dropped{0};

  void push(std::uint64_t seq, std::string frame) {
    {
      std::lock_guard lock(mu);
      if (frames.size() >= limit) {
        frames.pop_front();
        ++dropped;
      }
      frames.emplace_back(seq, std::move(frame));
    }
    cv.notify_one();
  }
};

} // namespace

struct Server::Impl {
  Server& self;
  asio::io_context io;
  tcp::acceptor acceptor{io};

  explicit Impl(Server& s) : self(s) {}

  void track(int fd, bool add) {
    std::lock_guard lock(self.conn_mu_);
    if (add)
      self.open_fds_.push_back(fd);
    else
      std::erase(self.open_fds_, fd);
  }

  http::response<http::string_body> reply(const http::request<http::string_body>& req, const ApiResult& r) {
    http::response<http::string_body> res{static_cast<http::status>(r.status), req.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    res.body() = r.body.dump();
    res.prepare_payload();
    return res;
  }

  void connection(tcp::socket sock) {
    const int fd = sock.native_handle();
    track(fd, true);
    beast::error_code ec;
    beast::flat_buffer buf;
    for (;;) {
      http::request<http::string_body> req;
      http::read(sock, buf, req, ec);
      if (ec) break;
      const std::string target(req.target());
      if (websocket::is_upgrade(req)) {
        stream(std::move(sock), std::move(req));
        track(fd, false);
        return;
      }
      ApiResult r;
      try {
        r = self.manager_->handle(std::string(req.method_string()), target, req.body());
      } catch (const std::exception& e) {
        r = {500, {{"error", e.what()}}};
      }
      http::write(sock, reply(req, r), ec);
      if (ec || !req.keep_alive()) break;
    }
    track(fd, false);
    sock.shutdown(tcp::socket::shutdown_both, ec);
  }

  void stream(tcp::socket sock, http::request<http::string_body> req) {
    beast::error_code ec;
    const auto [path, query] = split_target(std::string(req.target()));
    // /runs/{id}/stream
    std::string run_id;
    if (path.rfind("/runs/", 0) == 0 && path.size() > 13 && path.substr(path.size() - 7) == "/stream")
      run_id = path.substr(6, path.size() - 13);
    auto run = run_id.empty() ? nullptr : self.manager_->find(run_id);
    if (!run) {
      http::write(sock, reply(req, {404, {{"error", "unknown run '" + run_id + "'"}}}), ec);
      return;
    }
    std::uint64_t since = 0;
    if (auto it = query.find("since"); it != query.end()) since = std::strtoull(it->second.c_str(), nullptr, 10);

    websocket::stream<tcp::socket> ws(std::move(sock));
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);

    auto sub = std::make_shared<Subscriber>();
    sub->limit = self.opts_.stream_buffer;
    auto [obs, backlog] = run->records().subscribe(since, [sub](const Record& r) {
      sub->push(r.at("seq").get<std::uint64_t>(), r.dump());
    });
    std::uint64_t last = since;
    bool ended = false;
    auto send = [&](std::uint64_t seq, const std::string& text) {
      ws.write(asio::buffer(text), ec);
      last = seq;
      ended = ended || text.find("\"type\":\"run_end\"") != std::string::npos;
    };
    for (const auto& e : backlog) {
      if (ec || ended) break;
      send(e.at("seq").get<std::uint64_t>(), e.dump());
    }
    while (!ec && !ended && !self.stopping_) {
      // answer pings and a client close; anything else from the client is ignored
      if (ws.next_layer().available(ec) > 0) {
        beast::flat_buffer in;
        ws.read(in, ec);
        if (ec) break;
        continue;
      }
      std::pair<std::uint64_t, std::string> frame;
      {
        std::unique_lock lock(sub->mu);
        if (!sub->cv.wait_for(lock, std::chrono::milliseconds(100), [&] { return !sub->frames.empty(); })) continue;
        frame = std::move(sub->frames.front());
        sub->frames.pop_front();
      }
      if (frame.first <= last) continue;
      send(frame.first, frame.second);
    }
    run->records().remove_observer(obs);
    if (!ec) ws.close(ended ? websocket::close_code::normal : websocket::close_code::going_away, ec);
  }
};

Server::Server(ServerOptions opts) : opts_(std::move(opts)), impl_(std::make_unique<Impl>(*this)) {
  ServiceConfig cfg;
  cfg.scenario_root = opts_.scenario_root;
  cfg.runs_dir = opts_.runs_dir;
  cfg.backends_file = opts_.backends_file;
  cfg.turn_window_s = opts_.turn_window_s;
  manager_ = std::make_unique<RunManager>(std::move(cfg));

  const tcp::endpoint ep{asio::ip::make_address(opts_.host), opts_.port};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
}

Server::~Server() {
  stop();
  for (auto& t : workers_)
    if (t.joinable()) t.join();
  manager_->shutdown();
}

void Server::run() {
  while (!stopping_) {
    tcp::socket sock(impl_->io);
    beast::error_code ec;
    impl_->acceptor.accept(sock, ec);
    if (stopping_) break;
    if (ec) continue;
    std::lock_guard lock(conn_mu_);
    workers_.emplace_back([this, s = std::move(sock)]() mutable { impl_->connection(std::move(s)); });
  }
}

void Server::stop() {
  if (stopping_.exchange(true)) return;
  // shutdown(2) wakes the blocking accept and every blocking read
  ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  std::lock_guard lock(conn_mu_);
  for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
}

} // namespace mtsim
