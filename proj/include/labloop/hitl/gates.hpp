#pragma once

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/contract.hpp"
#include "labloop/core/run_state.hpp"
#include "labloop/hitl/modes.hpp"
#include "labloop/hitl/smartpause.hpp"

namespace labloop::hitl {

enum class GateAction { Approve, Edit, Reject, Guidance };
std::string to_string(GateAction a);
GateAction gate_action_from_string(const std::string& s);

struct Resolution {
  GateAction action = GateAction::Approve;
  Json edited_payload = nullptr;
  std::string guidance_text;
  std::string actor;
  std::string timestamp;

  Json to_json() const;
  static Resolution from_json(const Json& j);
};

struct GateTicket {
  std::string id;
  std::string run_id;
  int stage = 0;
  Json payload_snapshot;
  std::set<GateAction> allowed_actions{GateAction::Approve, GateAction::Edit, GateAction::Reject, GateAction::Guidance};
  std::string reason;  // "mode" or "smartpause"
  double uncertainty = 0.0;
  std::string opened_at;
  std::optional<Resolution> resolution;
  Json validation_report = nullptr;  // last rejected edit
  bool applied = false;             // the run has consumed the resolution

  bool open() const { return !resolution.has_value(); }
  Json to_json() const;
  static GateTicket from_json(const Json& j);
};

/// Stage is in the mode's gated set, or SmartPause is on and the stage's
/// reported uncertainty exceeds its threshold.
bool should_gate(const ModeSpec& mode, const SmartPauseState& sp, int stage, double uncertainty);

/// Opens a ticket when should_gate() holds and moves the run to awaiting_gate.
/// Throws InvariantViolation if the run already has an open ticket.
std::optional<GateTicket> maybe_open_gate(RunState& run, int stage, double uncertainty, const ModeSpec& mode,
                                          const SmartPauseState& sp, const Json& payload, const std::string& ticket_id,
                                          const std::string& timestamp);

/// Checks the action against the ticket and, for edits, validates the edited
/// payload. Returns the failing report for an invalid edit, nullopt otherwise.
/// Throws Conflict when the ticket is already resolved and InvalidRequest for
/// a disallowed action.
std::optional<ValidationReport> check_resolution(const GateTicket& ticket, const Resolution& r,
                                                 const ContractSet& contracts);

struct AppliedResolution {
  RunState state;
  bool rerun = false;  // reject: the stage runs again with guidance
  GateOutcome outcome = GateOutcome::ApprovedUnchanged;
};

/// approve continues with the snapshot, edit with the edited payload, guidance
/// continues and carries the text to the next stage, reject re-runs the stage
/// with the text as an overlay. Every resolution counts one intervention.
AppliedResolution apply_resolution(const RunState& run, const GateTicket& ticket, const ContractSet& contracts);

/// Append-only event journal shared by runs and the gate server. Sequence
/// numbers are assigned under a file lock so several processes can write.
class EventLog {
 public:
  explicit EventLog(fs::path file) : file_(std::move(file)) {}
  std::int64_t append(const std::string& kind, const std::string& run_id, const Json& data);
  std::vector<Json> since(std::int64_t seq) const;
  std::int64_t last_seq() const;
  const fs::path& file() const { return file_; }

 private:
  fs::path file_;
};

/// Ticket persistence under <runs_root>/<run_id>/tickets/. Resolution is
/// serialized per ticket: the first writer wins, later ones get Conflict.
class GateService {
 public:
  GateService(fs::path runs_root, EventLog* events) : root_(std::move(runs_root)), events_(events) {}

  void open(const GateTicket& ticket);
  GateTicket get(const std::string& ticket_id) const;
  std::vector<GateTicket> list(bool open_only) const;
  std::vector<GateTicket> for_run(const std::string& run_id) const;
  /// Records the resolution, or the validation report of a rejected edit.
  GateTicket resolve(const std::string& ticket_id, Resolution r, const ContractSet& contracts);
  void mark_applied(const std::string& ticket_id);
  std::string next_ticket_id(const std::string& run_id, int stage) const;

 private:
  fs::path path_for(const std::string& ticket_id) const;
  void save(const GateTicket& t) const;

  fs::path root_;
  EventLog* events_;
  mutable std::mutex mu_;
};

}  // namespace labloop::hitl
