#include "mtsim/record/record_set.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

namespace mtsim {

std::uint64_t RecordSet::append(std::string_view type, Record fields) {
  // Observers run under the lock so every subscriber sees events in seq
  // order; they must not block or append.
  std::lock_guard lock(mu_);
  const std::uint64_t seq = events_.size() + 1;
  Record ev{{"seq", seq}, {"type", type}};
  for (auto& [k, v] : fields.items()) ev[k] = std::move(v);
  if (sink_) *sink_ << ev.dump() << '\n';
  for (auto& [id, o] : observers_) o(ev);
  events_.push_back(std::move(ev));
  return seq;
}

void RecordSet::set_sink(std::ostream* out) {
  std::lock_guard lock(mu_);
  sink_ = out;
  if (sink_)
    for (const auto& ev : events_) *sink_ << ev.dump() << '\n';
}

std::uint64_t RecordSet::add_observer(Observer obs) {
  std::lock_guard lock(mu_);
  const auto id = next_observer_++;
  observers_.emplace_back(id, std::move(obs));
  return id;
}

void RecordSet::remove_observer(std::uint64_t id) {
  std::lock_guard lock(mu_);
  std::erase_if(observers_, [id](const auto& p) { return p.first == id; });
}

std::pair<std::uint64_t, std::vector<Record>> RecordSet::subscribe(std::uint64_t seq, Observer obs) {
  std::lock_guard lock(mu_);
  const auto id = next_observer_++;
  observers_.emplace_back(id, std::move(obs));
  std::vector<Record> backlog;
  if (seq < events_.size()) backlog.assign(events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end());
  return {id, std::move(backlog)};
}

std::size_t RecordSet::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::vector<Record> RecordSet::snapshot() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<Record> RecordSet::since(std::uint64_t seq) const {
  std::lock_guard lock(mu_);
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

std::string RecordSet::to_jsonl() const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& e : events_) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

LoadedLog load_jsonl(std::istream& in) {
  LoadedLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto ev = Record::parse(line);
      if (!ev.is_object() || !ev.contains("seq") || !ev.contains("type"))
        throw std::runtime_error("event lacks seq/type");
      if (ev["seq"].get<std::uint64_t>() != log.events.size() + 1)
        throw std::runtime_error("non-contiguous seq");
      log.events.push_back(std::move(ev));
    } catch (const std::exception& e) {
      log.bad_line = lineno;
      log.error = e.what();
      break;
    }
  }
  return log;
}

LoadedLog load_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    LoadedLog log;
    log.bad_line = 1;
    log.error = "cannot open " + path;
    return log;
  }
  return load_jsonl(in);
}

} // namespace mtsim
