#include "mtsim/llm/backend.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>

namespace mtsim::llm {

using nlohmann::json;

void BackendSpec::validate() const {
  if (id.empty()) throw std::invalid_argument("backend spec without id");
  if (!(timeout_s > 0.0)) throw std::invalid_argument("backend '" + id + "': timeout must be positive");
  if (max_retries < 0) throw std::invalid_argument("backend '" + id + "': retries must be >= 0");
  if (kind == BackendKind::HttpChat && endpoint.empty())
    throw std::invalid_argument("backend '" + id + "': http_chat needs an endpoint");
  if (kind == BackendKind::Scripted && script.empty() && !inline_script)
    throw std::invalid_argument("backend '" + id + "': scripted backend needs a script");
}

BackendSpec backend_spec_from_json(const json& j) {
  BackendSpec s;
  s.id = j.at("id").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "http_chat")
    s.kind = BackendKind::HttpChat;
  else if (kind == "scripted")
    s.kind = BackendKind::Scripted;
  else
    throw std::invalid_argument("backend '" + s.id + "': unknown kind '" + kind + "'");
  s.endpoint = j.value("endpoint", std::string{});
  s.model = j.value("model", std::string{});
  s.auth_env = j.value("auth_env", std::string{});
  if (auto it = j.find("script"); it != j.end()) {
    if (it->is_object())
      s.inline_script = *it;
    else
      s.script = it->get<std::string>();
  }
  s.defaults.temperature = j.value("temperature", 1.0);
  s.defaults.top_p = j.value("top_p", 1.0);
  s.timeout_s = j.value("timeout_s", 60.0);
  s.max_retries = j.value("max_retries", 3);
  s.backoff_ms = j.value("backoff_ms", 200);
  s.validate();
  return s;
}

nlohmann::ordered_json backend_spec_to_json(const BackendSpec& s) {
  nlohmann::ordered_json j{{"id", s.id}, {"kind", s.kind == BackendKind::HttpChat ? "http_chat" : "scripted"}};
  if (s.kind == BackendKind::HttpChat) {
    j["endpoint"] = s.endpoint;
    j["model"] = s.model;
    j["auth_env"] = s.auth_env;
  } else if (s.inline_script) {
    j["script"] = *s.inline_script;
  } else {
    j["script"] = s.script;
  }
  j["temperature"] = s.defaults.temperature;
  j["top_p"] = s.defaults.top_p;
  j["timeout_s"] = s.timeout_s;
  j["max_retries"] = s.max_retries;
  j["backoff_ms"] = s.backoff_ms;
  return j;
}

// --- scripted -------------------------------------------------------------

namespace {

std::vector<std::string> string_or_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  return v.get<std::vector<std::string>>();
}

std::optional<std::pair<int, int>> range(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_number_integer()) return std::pair{v.get<int>(), v.get<int>()};
  auto r = v.get<std::vector<int>>();
  if (r.size() != 2) throw std::invalid_argument(std::string("rule field '") + key + "' must be [lo, hi]");
  return std::pair{r[0], r[1]};
}

bool in(const std::vector<std::string>& set, const std::string& v) {
  return set.empty() || std::find(set.begin(), set.end(), v) != set.end();
}

bool in(const std::optional<std::pair<int, int>>& r, int v) {
  return !r || (v >= r->first && v <= r->second);
}

std::string reply_text(const json& j) {
  const auto& v = j.at("response");
  return v.is_string() ? v.get<std::string>() : v.dump();
}

} // namespace

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& script) {
  auto b = std::make_unique<ScriptedBackend>();
  if (script.contains("rules")) {
    b->queue_mode_ = false;
    for (const auto& r : script.at("rules")) {
      Rule rule;
      rule.agents = string_or_list(r, "agent");
      rule.purposes = string_or_list(r, "purpose");
      rule.frames = range(r, "frames");
      rule.turns = range(r, "turns");
      rule.contains = r.value("contains", std::string{});
      rule.reply.fail = r.value("fail", false);
      if (!rule.reply.fail) rule.reply.text = reply_text(r);
      b->rules_.push_back(std::move(rule));
    }
    if (script.contains("default")) {
      const auto& d = script.at("default");
      b->default_ = d.is_string() ? d.get<std::string>() : d.dump();
    }
  } else {
    for (const auto& r : script.at("responses")) {
      if (r.is_object() && r.value("fail", false))
        b->queue_.push_back({"", true});
      else
        b->queue_.push_back({r.is_string() ? r.get<std::string>() : r.dump(), false});
    }
  }
  return b;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open script " + path.string());
  return from_json(json::parse(in));
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_queue(std::vector<std::string> replies) {
  auto b = std::make_unique<ScriptedBackend>();
  for (auto& r : replies) b->queue_.push_back({std::move(r), false});
  return b;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_transcript(const std::vector<Record>& records,
                                                                  const std::string& backend_id) {
  auto b = std::make_unique<ScriptedBackend>();
  for (const auto& ev : records) {
    if (ev.value("type", "") != "agent_trace" || ev.value("kind", "") != "exchange") continue;
    if (ev.value("backend", "") != backend_id) continue;
    if (ev.contains("error") && !ev["error"].is_null())
      b->queue_.push_back({"", true});
    else
      b->queue_.push_back({ev.value("response", ""), false});
  }
  return b;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& req) {
  std::lock_guard lock(mu_);
  Reply reply;
  if (queue_mode_) {
    if (queue_.empty()) throw BackendFailure("scripted queue exhausted");
    reply = queue_.front();
    queue_.pop_front();
  } else {
    const std::string& last = req.messages.empty() ? std::string{} : req.messages.back().content;
    const Rule* hit = nullptr;
    for (const auto& r : rules_) {
      if (!in(r.agents, req.context.agent) || !in(r.purposes, req.context.purpose)) continue;
      if (!in(r.frames, req.context.frame) || !in(r.turns, req.context.turn)) continue;
      if (!r.contains.empty() && last.find(r.contains) == std::string::npos) continue;
      hit = &r;
      break;
    }
    if (hit)
      reply = hit->reply;
    else if (default_)
      reply = {*default_, false};
    else
      throw BackendFailure("no scripted rule matches purpose '" + req.context.purpose + "'");
  }
  if (reply.fail) throw BackendFailure("scripted failure");
  return {reply.text, std::nullopt, std::nullopt};
}

// --- http -----------------------------------------------------------------

HttpChatBackend::HttpChatBackend(BackendSpec spec) : spec_(std::move(spec)) {
  const auto& url = spec_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : url.substr(path_start);
}

ChatResponse HttpChatBackend::complete(const ChatRequest& req) {
  httplib::Client cli(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(spec_.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());

  json body{{"model", spec_.model},
            {"temperature", req.params.temperature},
            {"top_p", req.params.top_p},
            {"messages", json::array()}};
  for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Headers headers;
  if (!spec_.auth_env.empty()) {
    if (const char* token = std::getenv(spec_.auth_env.c_str()))
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw TransportError("transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("http status " + std::to_string(res->status));
  if (res->status != 200) throw BackendFailure("http status " + std::to_string(res->status));

  json reply;
  try {
    reply = json::parse(res->body);
    ChatResponse out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      const auto& u = reply["usage"];
      if (u.contains("prompt_tokens")) out.prompt_tokens = u["prompt_tokens"].get<int>();
      if (u.contains("completion_tokens")) out.completion_tokens = u["completion_tokens"].get<int>();
    }
    return out;
  } catch (const json::exception& e) {
    throw BackendFailure(std::string("malformed chat completion: ") + e.what());
  }
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, const std::filesystem::path& base_dir) {
  spec.validate();
  if (spec.kind == BackendKind::HttpChat) return std::make_unique<HttpChatBackend>(spec);
  if (spec.inline_script) return ScriptedBackend::from_json(*spec.inline_script);
  std::filesystem::path p = spec.script;
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return ScriptedBackend::from_file(p);
}

} // namespace mtsim::llm
