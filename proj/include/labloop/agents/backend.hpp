#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/net/transport.hpp"

namespace labloop::agents {

/// A rendered prompt ready to send.
struct RenderedPrompt {
  std::string system;
  std::string user;
  bool json_mode = false;
  int max_tokens = 0;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

struct AgentRequest {
  /// Routing label such as "stage08/draft/Innovator". Scripted backends key
  /// their fixture queues on it; live backends ignore it.
  std::string tag;
  RenderedPrompt prompt;
};

struct AgentResponse {
  std::string text;
  Json structured;  // set when the request was json_mode
  int prompt_tokens = 0;
  int completion_tokens = 0;
  double latency_ms = 0.0;
  std::size_t transcript_seq = 0;
};

enum class BackendKind { Scripted, HttpLlm, ExternalCoder };
std::string to_string(BackendKind k);

enum class Capability { Text, StructuredOutput };

struct Completion {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual const std::string& id() const = 0;
  virtual BackendKind kind() const = 0;
  virtual std::set<Capability> capabilities() const = 0;
  /// Throws TransportError once the backend's own retry budget is spent.
  virtual Completion complete(const AgentRequest& request) = 0;
  /// Cursor state persisted in checkpoints; empty for stateless backends.
  virtual Json snapshot_state() const { return Json::object(); }
  virtual void restore_state(const Json&) {}
};

/// Deterministic backend fed from a fixture document:
///
///   {"responses": {"stage08/draft/Innovator": [...], "stage08": [...], "*": [...]}}
///
/// A request tag resolves to the longest '/'-separated prefix that has a
/// queue, then to "*". Each queue hands out its entries in order and keeps
/// returning the last one once the others are consumed. Entries that are not
/// strings are returned as their JSON dump; {"$error": "transport"} raises a
/// TransportError for that call.
class ScriptedBackend final : public AgentBackend {
 public:
  explicit ScriptedBackend(Json fixture, std::string id = "scripted",
                           BackendKind kind = BackendKind::Scripted);
  static std::unique_ptr<ScriptedBackend> from_file(const fs::path& path);

  const std::string& id() const override { return id_; }
  BackendKind kind() const override { return kind_; }
  std::set<Capability> capabilities() const override;
  Completion complete(const AgentRequest& request) override;
  Json snapshot_state() const override;
  void restore_state(const Json& state) override;

  /// Every request received, in arrival order.
  std::vector<AgentRequest> requests() const;
  const Json& fixture() const { return fixture_; }

 private:
  std::string resolve_key(const std::string& tag) const;

  std::string id_;
  BackendKind kind_;
  Json fixture_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> cursors_;
  std::vector<AgentRequest> requests_;
};

struct HttpLlmConfig {
  std::string endpoint;  // base URL; requests go to <endpoint>/v1/chat/completions
  std::string model;
  std::string api_key;
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
};

/// OpenAI-compatible chat completion client.
class HttpLlmBackend final : public AgentBackend {
 public:
  HttpLlmBackend(std::string id, HttpLlmConfig config, std::shared_ptr<net::Transport> transport,
                 BackendKind kind = BackendKind::HttpLlm);

  const std::string& id() const override { return id_; }
  BackendKind kind() const override { return kind_; }
  std::set<Capability> capabilities() const override;
  Completion complete(const AgentRequest& request) override;

 private:
  std::string id_;
  HttpLlmConfig config_;
  std::shared_ptr<net::Transport> transport_;
  BackendKind kind_;
};

struct TranscriptEntry {
  std::size_t seq = 0;
  std::string tag;
  std::string backend;
  std::string request_digest;
  std::string response;
  std::string error;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  double latency_ms = 0.0;

  Json to_json() const;
  static TranscriptEntry from_json(const Json& j);
};

/// Append-only record of every agent call in a run. Optionally mirrored to a
/// JSONL file.
class TranscriptLog {
 public:
  TranscriptLog() = default;
  explicit TranscriptLog(fs::path file) : file_(std::move(file)) {}

  std::size_t append(TranscriptEntry entry);
  std::vector<TranscriptEntry> entries() const;
  std::size_t size() const;
  /// Reloads the mirrored file keeping its first `keep` records; later ones
  /// belong to work a checkpoint never saw and are dropped.
  void restore(std::size_t keep);

 private:
  mutable std::mutex mu_;
  std::optional<fs::path> file_;
  std::vector<TranscriptEntry> entries_;
};

/// Extracts a JSON object or array from model text, tolerating a ```json fence.
std::optional<Json> parse_structured(const std::string& text);

/// Sends the request, records it in the transcript, and parses structured
/// output when json_mode is set. Throws TransportError or MalformedOutput.
AgentResponse call_agent(AgentBackend& backend, const AgentRequest& request, TranscriptLog* transcript);

}  // namespace labloop::agents
