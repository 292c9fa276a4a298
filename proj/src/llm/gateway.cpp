#include "mtsim/llm/gateway.hpp"

#include <thread>

namespace mtsim::llm {

using nlohmann::ordered_json;

std::string apply_redactions(std::string text, const std::vector<Redaction>& rules) {
  for (const auto& r : rules) {
    if (r.from.empty()) continue;
    std::size_t pos = 0;
    while ((pos = text.find(r.from, pos)) != std::string::npos) {
      text.replace(pos, r.from.size(), r.to);
      pos += r.to.size();
    }
  }
  return text;
}

Gateway::Gateway(std::shared_ptr<RecordSet> transcript)
    : transcript_(std::move(transcript)),
      sleep_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void Gateway::register_backend(BackendSpec spec, std::unique_ptr<Backend> backend) {
  const std::string id = spec.id;
  backends_.insert_or_assign(id, Entry{std::move(spec), std::move(backend)});
}

const BackendSpec& Gateway::spec(const std::string& id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw std::invalid_argument("unknown backend '" + id + "'");
  return it->second.spec;
}

std::string Gateway::complete(const std::string& backend, std::vector<ChatMessage> messages,
                              const CallContext& ctx, std::optional<SamplingParams> params) {
  auto it = backends_.find(backend);
  if (it == backends_.end()) throw BackendFailure("unknown backend '" + backend + "'");
  Entry& entry = it->second;
  for (auto& m : messages) m.content = apply_redactions(std::move(m.content), redactions_);
  ChatRequest req{std::move(messages), params.value_or(entry.spec.defaults), ctx};
  ++calls_;

  std::optional<ChatResponse> reply;
  std::string error;
  int attempts = 0;
  const auto start = std::chrono::steady_clock::now();
  for (;;) {
    ++attempts;
    try {
      reply = entry.backend->complete(req);
      break;
    } catch (const TransportError& e) {
      error = e.what();
      if (attempts > entry.spec.max_retries) break;
      sleep_(std::chrono::milliseconds(entry.spec.backoff_ms) * (1 << (attempts - 1)));
    } catch (const BackendFailure& e) {
      error = e.what();
      break;
    }
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  const auto latency_ms =
      entry.backend->timed() ? std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() : 0;

  ordered_json msgs = ordered_json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  ordered_json ev{{"agent", ctx.agent},
                  {"frame", ctx.frame},
                  {"turn", ctx.turn},
                  {"kind", "exchange"},
                  {"backend", backend},
                  {"purpose", ctx.purpose},
                  {"messages", msgs},
                  {"params", {{"temperature", req.params.temperature}, {"top_p", req.params.top_p}}},
                  {"response", reply ? ordered_json(reply->text) : ordered_json(nullptr)},
                  {"error", reply ? ordered_json(nullptr) : ordered_json(error)},
                  {"attempts", attempts},
                  {"latency_ms", latency_ms}};
  if (reply && reply->prompt_tokens) ev["prompt_tokens"] = *reply->prompt_tokens;
  if (reply && reply->completion_tokens) ev["completion_tokens"] = *reply->completion_tokens;
  transcript_->append("agent_trace", std::move(ev));

  if (!reply) throw BackendFailure(backend + ": " + error);
  return reply->text;
}

std::string Gateway::consult_expert(const std::string& expert, const PromptSet& prompts,
                                    const std::string& template_name, const std::string& reasoning,
                                    const std::string& market_context, CallContext ctx) {
  if (reasoning.empty()) throw std::invalid_argument("consult_expert: empty reasoning");
  ctx.purpose = template_name;
  const std::string prompt = prompts.render(
      template_name, {{"reasoning", reasoning}, {"market", market_context.empty() ? "(none)" : market_context}});
  std::string advice = complete(expert, {{"user", prompt}}, ctx);
  if (advice.size() > advice_cap_) {
    advice.resize(advice_cap_);
    advice += kTruncationMarker;
  }
  return advice;
}

} // namespace mtsim::llm
