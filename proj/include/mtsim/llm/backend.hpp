#pragma once
#include <chrono>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtsim/record/record_set.hpp"

namespace mtsim::llm {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct SamplingParams {
  double temperature{1.0};
  double top_p{1.0};
};

// Who is asking and why. Sent to scripted backends (rule matching) and to
// the transcript; never to remote endpoints.
struct CallContext {
  std::string agent;
  int frame{0};
  int turn{0};
  std::string purpose;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  SamplingParams params;
  CallContext context;
};

struct ChatResponse {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

// Final failure after retries; callers choose a fallback.
class BackendFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Retryable transport problem (connection refused, timeout, 5xx, 429).
class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class BackendKind { HttpChat, Scripted };

struct BackendSpec {
  std::string id;
  BackendKind kind{BackendKind::Scripted};
  // http_chat
  std::string endpoint;
  std::string model;
  // name of the environment variable holding the bearer token
  std::string auth_env;
  // scripted: a path, or an inline script document
  std::string script;
  std::optional<nlohmann::json> inline_script;
  SamplingParams defaults;
  double timeout_s{60.0};
  int max_retries{3};
  int backoff_ms{200};

  void validate() const;
};

// Paths in `script` are resolved against `base_dir`.
BackendSpec backend_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json backend_spec_to_json(const BackendSpec& s);

class Backend {
public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
  // Whether latency is reported in transcripts. Scripted replies report zero
  // so logs stay byte-identical across runs.
  virtual bool timed() const { return true; }
};

// Deterministic stand-in for a model. Two modes, selected by the script:
//   {"responses": [...]}           replies in order; exhaustion is a failure
//   {"rules": [...], "default": s} first rule whose filters all match wins
// Rule filters: agent (string or list), purpose (string or list),
// frames [lo, hi], turns [lo, hi], contains (substring of the last message).
// A rule may carry "fail": true to simulate an outage.
class ScriptedBackend final : public Backend {
public:
  struct Reply {
    std::string text;
    bool fail{false};
  };

  static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& script);
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);
  static std::unique_ptr<ScriptedBackend> from_queue(std::vector<std::string> replies);
  // Rebuilds the reply stream a backend produced in a recorded run.
  static std::unique_ptr<ScriptedBackend> from_transcript(const std::vector<Record>& records,
                                                          const std::string& backend_id);

  ChatResponse complete(const ChatRequest& req) override;
  bool timed() const override { return false; }

private:
  struct Rule {
    std::vector<std::string> agents;
    std::vector<std::string> purposes;
    std::optional<std::pair<int, int>> frames;
    std::optional<std::pair<int, int>> turns;
    std::string contains;
    Reply reply;
  };

  std::mutex mu_;
  bool queue_mode_{true};
  std::deque<Reply> queue_;
  std::vector<Rule> rules_;
  std::optional<std::string> default_;
};

// OpenAI-compatible chat-completion client.
class HttpChatBackend final : public Backend {
public:
  explicit HttpChatBackend(BackendSpec spec);
  ChatResponse complete(const ChatRequest& req) override;

private:
  BackendSpec spec_;
  std::string scheme_host_port_;
  std::string path_;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec,
                                      const std::filesystem::path& base_dir = {});

} // namespace mtsim::llm
