#pragma once
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mtsim {

using Record = nlohmann::ordered_json;

// The append-only transaction log. Every event carries a monotonically
// increasing "seq" and a "type"; the full field list per type is frozen in
// docs/record-format.md.
class RecordSet {
public:
  using Observer = std::function<void(const Record&)>;

  RecordSet() = default;
  RecordSet(const RecordSet&) = delete;
  RecordSet& operator=(const RecordSet&) = delete;

  // Assigns seq, stores the event, forwards it to the sink and observers.
  // Returns the assigned seq.
  std::uint64_t append(std::string_view type, Record fields);

  // Mirrors the log to `out` (one JSON document per line), starting with the
  // events already recorded.
  void set_sink(std::ostream* out);
  // Returns an id usable with remove_observer.
  std::uint64_t add_observer(Observer obs);
  void remove_observer(std::uint64_t id);
  // Registers `obs` and returns the events after `seq` in one step, so the
  // caller sees every event exactly once.
  std::pair<std::uint64_t, std::vector<Record>> subscribe(std::uint64_t seq, Observer obs);

  std::size_t size() const;
  std::vector<Record> snapshot() const;
  std::vector<Record> since(std::uint64_t seq) const;
  // Unsynchronized view; only valid while no writer is active.
  const std::vector<Record>& events() const noexcept { return events_; }

  std::string to_jsonl() const;

private:
  mutable std::mutex mu_;
  std::vector<Record> events_;
  std::ostream* sink_{nullptr};
  std::vector<std::pair<std::uint64_t, Observer>> observers_;
  std::uint64_t next_observer_{1};
};

// Reads a line-delimited log. Stops at the first line that fails to parse and
// reports its 1-based line number in `bad_line` (0 when the log is clean).
struct LoadedLog {
  std::vector<Record> events;
  std::size_t bad_line{0};
  std::string error;
};
LoadedLog load_jsonl(std::istream& in);
LoadedLog load_jsonl_file(const std::string& path);

} // namespace mtsim
