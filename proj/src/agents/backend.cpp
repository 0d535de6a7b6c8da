#include "labloop/agents/backend.hpp"

#include <thread>

#include <fmt/format.h>

#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::agents {

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Scripted: return "scripted";
    case BackendKind::HttpLlm: return "http_llm";
    case BackendKind::ExternalCoder: return "external_coder";
  }
  return "scripted";
}

ScriptedBackend::ScriptedBackend(Json fixture, std::string id, BackendKind kind)
    : id_(std::move(id)), kind_(kind), fixture_(std::move(fixture)) {
  if (!fixture_.contains("responses") || !fixture_["responses"].is_object()) {
    throw ConfigError("scripted fixture needs a 'responses' object");
  }
  for (const auto& [key, queue] : fixture_["responses"].items()) {
    if (!queue.is_array() || queue.empty()) throw ConfigError("scripted queue '" + key + "' must be a non-empty list");
  }
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const fs::path& path) {
  return std::make_unique<ScriptedBackend>(Json::parse(read_file(path)));
}

std::set<Capability> ScriptedBackend::capabilities() const {
  return {Capability::Text, Capability::StructuredOutput};
}

std::string ScriptedBackend::resolve_key(const std::string& tag) const {
  const auto& responses = fixture_["responses"];
  std::string key = tag;
  while (!key.empty()) {
    if (responses.contains(key)) return key;
    auto slash = key.rfind('/');
    if (slash == std::string::npos) break;
    key.resize(slash);
  }
  if (responses.contains("*")) return "*";
  throw ConfigError("scripted backend has no response for tag '" + tag + "'");
}

Completion ScriptedBackend::complete(const AgentRequest& request) {
  std::lock_guard lock(mu_);
  requests_.push_back(request);
  const std::string key = resolve_key(request.tag);
  const auto& queue = fixture_["responses"][key];
  std::size_t& cursor = cursors_[key];
  const Json& entry = queue[std::min(cursor, queue.size() - 1)];
  ++cursor;
  if (entry.is_object() && entry.contains("$error")) {
    throw TransportError(fmt::format("scripted {} failure for '{}'", entry["$error"].get<std::string>(), request.tag));
  }
  Completion c;
  c.text = entry.is_string() ? entry.get<std::string>() : entry.dump();
  c.prompt_tokens = static_cast<int>(text::word_count(request.prompt.system) + text::word_count(request.prompt.user));
  c.completion_tokens = static_cast<int>(text::word_count(c.text));
  return c;
}

Json ScriptedBackend::snapshot_state() const {
  std::lock_guard lock(mu_);
  Json j = Json::object();
  for (const auto& [k, v] : cursors_) j[k] = v;
  return j;
}

void ScriptedBackend::restore_state(const Json& state) {
  std::lock_guard lock(mu_);
  cursors_.clear();
  for (const auto& [k, v] : state.items()) cursors_[k] = v.get<std::size_t>();
}

std::vector<AgentRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

HttpLlmBackend::HttpLlmBackend(std::string id, HttpLlmConfig config, std::shared_ptr<net::Transport> transport,
                               BackendKind kind)
    : id_(std::move(id)), config_(std::move(config)), transport_(std::move(transport)), kind_(kind) {
  if (config_.endpoint.empty()) throw ConfigError("http backend '" + id_ + "' has no endpoint");
  if (config_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
}

std::set<Capability> HttpLlmBackend::capabilities() const {
  return {Capability::Text, Capability::StructuredOutput};
}

Completion HttpLlmBackend::complete(const AgentRequest& request) {
  Json body{{"model", config_.model},
            {"messages",
             Json::array({{{"role", "system"}, {"content", request.prompt.system}},
                          {{"role", "user"}, {"content", request.prompt.user}}})}};
  if (request.prompt.max_tokens > 0) body["max_tokens"] = request.prompt.max_tokens;
  if (request.prompt.json_mode) body["response_format"] = {{"type", "json_object"}};
  net::HttpRequest http;
  http.method = "POST";
  http.url = config_.endpoint + "/v1/chat/completions";
  http.headers["Content-Type"] = "application/json";
  if (!config_.api_key.empty()) http.headers["Authorization"] = "Bearer " + config_.api_key;
  http.body = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    try {
      auto res = transport_->send(http);
      if (res.status >= 500 || res.status == 429) {
        last_error = fmt::format("HTTP {}", res.status);
      } else if (res.status != 200) {
        throw TransportError(fmt::format("{} rejected request: HTTP {}", id_, res.status));
      } else {
        Json doc = Json::parse(res.body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty()) {
          throw MalformedOutput(id_ + " returned an unexpected completion document");
        }
        Completion c;
        c.text = doc["choices"][0]["message"]["content"].get<std::string>();
        if (doc.contains("usage")) {
          c.prompt_tokens = doc["usage"].value("prompt_tokens", 0);
          c.completion_tokens = doc["usage"].value("completion_tokens", 0);
        }
        return c;
      }
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt < config_.max_attempts) std::this_thread::sleep_for(config_.backoff * attempt);
  }
  throw TransportError(fmt::format("{}: giving up after {} attempts: {}", id_, config_.max_attempts, last_error));
}

Json TranscriptEntry::to_json() const {
  return {{"seq", seq},
          {"tag", tag},
          {"backend", backend},
          {"request_digest", request_digest},
          {"response", response},
          {"error", error},
          {"prompt_tokens", prompt_tokens},
          {"completion_tokens", completion_tokens},
          {"latency_ms", latency_ms}};
}

TranscriptEntry TranscriptEntry::from_json(const Json& j) {
  TranscriptEntry e;
  e.seq = j.value("seq", std::size_t{0});
  e.tag = j.value("tag", "");
  e.backend = j.value("backend", "");
  e.request_digest = j.value("request_digest", "");
  e.response = j.value("response", "");
  e.error = j.value("error", "");
  e.prompt_tokens = j.value("prompt_tokens", 0);
  e.completion_tokens = j.value("completion_tokens", 0);
  e.latency_ms = j.value("latency_ms", 0.0);
  return e;
}

void TranscriptLog::restore(std::size_t keep) {
  std::lock_guard lock(mu_);
  entries_.clear();
  if (!file_ || !fs::exists(*file_)) return;
  std::string kept;
  for (const auto& line : text::split_lines(read_file(*file_))) {
    if (entries_.size() == keep) break;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) break;
    entries_.push_back(TranscriptEntry::from_json(j));
    kept += line + "\n";
  }
  write_file_atomic(*file_, kept);
}

std::size_t TranscriptLog::append(TranscriptEntry entry) {
  std::lock_guard lock(mu_);
  entry.seq = entries_.size() + 1;
  if (file_) append_line_locked(*file_, entry.to_json().dump());
  entries_.push_back(std::move(entry));
  return entries_.back().seq;
}

std::vector<TranscriptEntry> TranscriptLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t TranscriptLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::optional<Json> parse_structured(const std::string& raw) {
  std::string body = text::trim(raw);
  if (text::starts_with(body, "```")) {
    auto first_nl = body.find('\n');
    auto fence_end = body.rfind("```");
    if (first_nl != std::string::npos && fence_end != std::string::npos && fence_end > first_nl) {
      body = text::trim(body.substr(first_nl + 1, fence_end - first_nl - 1));
    }
  }
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded() || !(doc.is_object() || doc.is_array())) return std::nullopt;
  return doc;
}

AgentResponse call_agent(AgentBackend& backend, const AgentRequest& request, TranscriptLog* transcript) {
  TranscriptEntry entry;
  entry.tag = request.tag;
  entry.backend = backend.id();
  entry.request_digest = sha256_hex(request.prompt.system + "\x1f" + request.prompt.user);

  const auto start = std::chrono::steady_clock::now();
  Completion c;
  try {
    c = backend.complete(request);
  } catch (const Error& e) {
    entry.error = e.what();
    if (transcript) transcript->append(entry);
    throw;
  }
  const double elapsed =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  AgentResponse resp;
  resp.text = c.text;
  resp.prompt_tokens = c.prompt_tokens;
  resp.completion_tokens = c.completion_tokens;
  resp.latency_ms = backend.kind() == BackendKind::Scripted ? 0.0 : elapsed;
  entry.response = c.text;
  entry.prompt_tokens = c.prompt_tokens;
  entry.completion_tokens = c.completion_tokens;
  entry.latency_ms = resp.latency_ms;

  if (request.prompt.json_mode) {
    auto parsed = parse_structured(c.text);
    if (!parsed) {
      entry.error = "malformed structured output";
      if (transcript) resp.transcript_seq = transcript->append(entry);
      throw MalformedOutput(fmt::format("'{}' from {} is not a structured document", request.tag, backend.id()));
    }
    resp.structured = std::move(*parsed);
  }
  if (transcript) resp.transcript_seq = transcript->append(entry);
  return resp;
}

}  // namespace labloop::agents
