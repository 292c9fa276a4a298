#pragma once
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtsim/llm/backend.hpp"
#include "mtsim/llm/prompts.hpp"
#include "mtsim/record/record_set.hpp"

namespace mtsim::llm {

// Literal substitution applied to every outgoing message (entity and date
// masking).
struct Redaction {
  std::string from;
  std::string to;
};

std::string apply_redactions(std::string text, const std::vector<Redaction>& rules);

inline constexpr std::string_view kTruncationMarker = " [...truncated]";

// Uniform chat-completion entry point. Every call, successful or not, is
// appended once to the transcript as an agent_trace/exchange event.
class Gateway {
public:
  explicit Gateway(std::shared_ptr<RecordSet> transcript);

  void register_backend(BackendSpec spec, std::unique_ptr<Backend> backend);
  bool has_backend(const std::string& id) const { return backends_.contains(id); }
  const BackendSpec& spec(const std::string& id) const;

  void set_redactions(std::vector<Redaction> rules) { redactions_ = std::move(rules); }
  void set_advice_cap(std::size_t chars) { advice_cap_ = chars; }
  std::size_t advice_cap() const noexcept { return advice_cap_; }
  // Replaces the backoff sleep (tests).
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleep_ = std::move(sleeper); }

  // Throws BackendFailure once transport retries are exhausted.
  std::string complete(const std::string& backend, std::vector<ChatMessage> messages,
                       const CallContext& ctx, std::optional<SamplingParams> params = std::nullopt);

  // Asks the expert to evaluate `reasoning` using `template_name` from the
  // prompt set. The returned advice is capped at advice_cap() characters;
  // the transcript keeps the full reply.
  std::string consult_expert(const std::string& expert, const PromptSet& prompts,
                             const std::string& template_name, const std::string& reasoning,
                             const std::string& market_context, CallContext ctx);

  std::uint64_t calls() const noexcept { return calls_.load(); }

private:
  struct Entry {
    BackendSpec spec;
    std::unique_ptr<Backend> backend;
  };
  std::shared_ptr<RecordSet> transcript_;
  std::map<std::string, Entry> backends_;
  std::vector<Redaction> redactions_;
  std::size_t advice_cap_{4000};
  std::function<void(std::chrono::milliseconds)> sleep_;
  std::atomic<std::uint64_t> calls_{0};
};

} // namespace mtsim::llm
