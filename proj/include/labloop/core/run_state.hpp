#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"

namespace labloop {

struct RunBudget {
  int max_pivots = 2;
  int max_refines = 10;
  int pivots_used = 0;
  int refines_used = 0;

  friend bool operator==(const RunBudget&, const RunBudget&) = default;
};

enum class DecisionKind { Proceed, Refine, Pivot };

std::string to_string(DecisionKind k);
DecisionKind decision_from_string(const std::string& s);

struct Decision {
  DecisionKind kind = DecisionKind::Proceed;
  std::string justification;
  std::vector<std::string> evidence_refs;

  /// Reads {"decision", "justification", "evidence_refs"} from a stage-15 payload.
  static Decision from_payload(const Json& payload);
};

enum class RunStatus { Running, AwaitingGate, Completed, Failed };

std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

/// Something worth remembering across runs; consumed by lesson extraction.
struct RunEvent {
  std::string kind;  // repair_failure, repair_exhausted, pivot, gate_rejected, doc_rejected
  int stage = 0;
  std::string detail;
  std::string category;
  std::string fingerprint;

  friend bool operator==(const RunEvent&, const RunEvent&) = default;
};

/// Stage outputs from an abandoned hypothesis attempt or refine cycle.
struct ArchivedAttempt {
  std::string label;  // "attempt-1", "attempt-1/refine-2"
  std::map<int, Json> artifacts;

  friend bool operator==(const ArchivedAttempt&, const ArchivedAttempt&) = default;
};

struct RunState {
  std::string run_id;
  std::string topic;
  std::string domain = "generic";
  std::string mode = "FullAuto";
  int current_stage = 1;
  RunBudget budget;
  std::map<int, Json> artifacts;
  std::vector<ArchivedAttempt> archived;
  RunStatus status = RunStatus::Running;
  std::string created_at;
  std::string updated_at;

  std::vector<std::string> warnings;
  std::vector<Json> decisions;  // every stage-15 decision as applied
  std::vector<RunEvent> events;
  std::optional<std::string> open_ticket;
  int interventions = 0;
  int stage15_visits = 0;
  bool refine_pending = false;
  /// Guidance text from rejected gates, injected as overlays on the next render of that stage.
  std::map<int, std::vector<std::string>> guidance;
  /// Opaque backend cursor so a resumed run replays deterministically.
  Json backend_state = Json::object();
  Json failure = nullptr;  // {stage, code, message} once status == Failed
  bool timed_out = false;

  Json to_json() const;
  static RunState from_json(const Json& j);

  friend bool operator==(const RunState&, const RunState&) = default;
};

}  // namespace labloop
