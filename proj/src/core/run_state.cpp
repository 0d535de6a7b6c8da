#include "labloop/core/run_state.hpp"

#include "labloop/common/error.hpp"

namespace labloop {

std::string to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::Proceed: return "Proceed";
    case DecisionKind::Refine: return "Refine";
    case DecisionKind::Pivot: return "Pivot";
  }
  return "Proceed";
}

DecisionKind decision_from_string(const std::string& s) {
  if (s == "Proceed") return DecisionKind::Proceed;
  if (s == "Refine") return DecisionKind::Refine;
  if (s == "Pivot") return DecisionKind::Pivot;
  throw TransitionError("unknown decision: " + s);
}

Decision Decision::from_payload(const Json& payload) {
  if (!payload.is_object() || !payload.contains("decision") || !payload["decision"].is_string()) {
    throw TransitionError("stage 15 output carries no decision");
  }
  Decision d;
  d.kind = decision_from_string(payload["decision"].get<std::string>());
  d.justification = payload.value("justification", "");
  if (payload.contains("evidence_refs")) {
    d.evidence_refs = payload["evidence_refs"].get<std::vector<std::string>>();
  }
  return d;
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::AwaitingGate: return "awaiting_gate";
    case RunStatus::Completed: return "completed";
    case RunStatus::Failed: return "failed";
  }
  return "running";
}

RunStatus run_status_from_string(const std::string& s) {
  if (s == "running") return RunStatus::Running;
  if (s == "awaiting_gate") return RunStatus::AwaitingGate;
  if (s == "completed") return RunStatus::Completed;
  if (s == "failed") return RunStatus::Failed;
  throw CorruptCheckpoint("unknown run status: " + s);
}

namespace {

Json artifacts_to_json(const std::map<int, Json>& artifacts) {
  Json j = Json::object();
  for (const auto& [k, v] : artifacts) j[std::to_string(k)] = v;
  return j;
}

std::map<int, Json> artifacts_from_json(const Json& j) {
  std::map<int, Json> out;
  for (const auto& [k, v] : j.items()) out.emplace(std::stoi(k), v);
  return out;
}

}  // namespace

Json RunState::to_json() const {
  Json j;
  j["run_id"] = run_id;
  j["topic"] = topic;
  j["domain"] = domain;
  j["mode"] = mode;
  j["current_stage"] = current_stage;
  j["budget"] = {{"max_pivots", budget.max_pivots},
                 {"max_refines", budget.max_refines},
                 {"pivots_used", budget.pivots_used},
                 {"refines_used", budget.refines_used}};
  j["artifacts"] = artifacts_to_json(artifacts);
  j["archived"] = Json::array();
  for (const auto& a : archived) {
    j["archived"].push_back({{"label", a.label}, {"artifacts", artifacts_to_json(a.artifacts)}});
  }
  j["status"] = to_string(status);
  j["created_at"] = created_at;
  j["updated_at"] = updated_at;
  j["warnings"] = warnings;
  j["decisions"] = decisions;
  j["events"] = Json::array();
  for (const auto& e : events) {
    j["events"].push_back({{"kind", e.kind},
                           {"stage", e.stage},
                           {"detail", e.detail},
                           {"category", e.category},
                           {"fingerprint", e.fingerprint}});
  }
  j["open_ticket"] = open_ticket ? Json(*open_ticket) : Json(nullptr);
  j["interventions"] = interventions;
  j["stage15_visits"] = stage15_visits;
  j["refine_pending"] = refine_pending;
  j["guidance"] = Json::object();
  for (const auto& [k, v] : guidance) j["guidance"][std::to_string(k)] = v;
  j["backend_state"] = backend_state;
  j["failure"] = failure;
  j["timed_out"] = timed_out;
  return j;
}

RunState RunState::from_json(const Json& j) {
  try {
    RunState s;
    s.run_id = j.at("run_id").get<std::string>();
    s.topic = j.at("topic").get<std::string>();
    s.domain = j.at("domain").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    s.current_stage = j.at("current_stage").get<int>();
    const auto& b = j.at("budget");
    s.budget.max_pivots = b.at("max_pivots").get<int>();
    s.budget.max_refines = b.at("max_refines").get<int>();
    s.budget.pivots_used = b.at("pivots_used").get<int>();
    s.budget.refines_used = b.at("refines_used").get<int>();
    s.artifacts = artifacts_from_json(j.at("artifacts"));
    for (const auto& a : j.at("archived")) {
      s.archived.push_back({a.at("label").get<std::string>(), artifacts_from_json(a.at("artifacts"))});
    }
    s.status = run_status_from_string(j.at("status").get<std::string>());
    s.created_at = j.at("created_at").get<std::string>();
    s.updated_at = j.at("updated_at").get<std::string>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    s.decisions = j.at("decisions").get<std::vector<Json>>();
    for (const auto& e : j.at("events")) {
      s.events.push_back({e.at("kind").get<std::string>(), e.at("stage").get<int>(),
                          e.at("detail").get<std::string>(), e.at("category").get<std::string>(),
                          e.at("fingerprint").get<std::string>()});
    }
    if (!j.at("open_ticket").is_null()) s.open_ticket = j["open_ticket"].get<std::string>();
    s.interventions = j.at("interventions").get<int>();
    s.stage15_visits = j.at("stage15_visits").get<int>();
    s.refine_pending = j.at("refine_pending").get<bool>();
    for (const auto& [k, v] : j.at("guidance").items()) {
      s.guidance[std::stoi(k)] = v.get<std::vector<std::string>>();
    }
    s.backend_state = j.at("backend_state");
    s.failure = j.at("failure");
    s.timed_out = j.at("timed_out").get<bool>();
    return s;
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed run state: ") + e.what());
  }
}

}  // namespace labloop
