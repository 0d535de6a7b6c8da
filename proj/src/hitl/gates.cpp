#include "labloop/hitl/gates.hpp"

#include <fcntl.h>
#include <fmt/format.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"
#include "labloop/core/transitions.hpp"

namespace labloop::hitl {

std::string to_string(GateAction a) {
  switch (a) {
    case GateAction::Approve: return "approve";
    case GateAction::Edit: return "edit";
    case GateAction::Reject: return "reject";
    case GateAction::Guidance: return "guidance";
  }
  return "approve";
}

GateAction gate_action_from_string(const std::string& s) {
  if (s == "approve") return GateAction::Approve;
  if (s == "edit") return GateAction::Edit;
  if (s == "reject") return GateAction::Reject;
  if (s == "guidance") return GateAction::Guidance;
  throw InvalidRequest("unknown gate action '" + s + "' (approve, edit, reject, guidance)");
}

Json Resolution::to_json() const {
  return {{"action", to_string(action)},
          {"edited_payload", edited_payload},
          {"guidance", guidance_text},
          {"actor", actor},
          {"timestamp", timestamp}};
}

Resolution Resolution::from_json(const Json& j) {
  Resolution r;
  r.action = gate_action_from_string(j.at("action").get<std::string>());
  r.edited_payload = j.value("edited_payload", Json(nullptr));
  r.guidance_text = j.value("guidance", "");
  r.actor = j.value("actor", "");
  r.timestamp = j.value("timestamp", "");
  return r;
}

Json GateTicket::to_json() const {
  Json actions = Json::array();
  for (auto a : allowed_actions) actions.push_back(to_string(a));
  return {{"id", id},
          {"run_id", run_id},
          {"stage", stage},
          {"stage_name", std::string(StageId::of(stage).name())},
          {"payload", payload_snapshot},
          {"allowed_actions", actions},
          {"reason", reason},
          {"uncertainty", uncertainty},
          {"opened_at", opened_at},
          {"status", open() ? "open" : "resolved"},
          {"resolution", resolution ? resolution->to_json() : Json(nullptr)},
          {"validation_report", validation_report},
          {"applied", applied}};
}

GateTicket GateTicket::from_json(const Json& j) {
  GateTicket t;
  t.id = j.at("id").get<std::string>();
  t.run_id = j.at("run_id").get<std::string>();
  t.stage = j.at("stage").get<int>();
  t.payload_snapshot = j.value("payload", Json(nullptr));
  t.allowed_actions.clear();
  for (const auto& a : j.value("allowed_actions", Json::array())) t.allowed_actions.insert(gate_action_from_string(a));
  t.reason = j.value("reason", "");
  t.uncertainty = j.value("uncertainty", 0.0);
  t.opened_at = j.value("opened_at", "");
  if (j.contains("resolution") && !j["resolution"].is_null()) t.resolution = Resolution::from_json(j["resolution"]);
  t.validation_report = j.value("validation_report", Json(nullptr));
  t.applied = j.value("applied", false);
  return t;
}

bool should_gate(const ModeSpec& mode, const SmartPauseState& sp, int stage, double uncertainty) {
  if (mode.gated_stages.count(stage)) return true;
  return mode.smartpause && uncertainty > sp.theta(stage);
}

std::optional<GateTicket> maybe_open_gate(RunState& run, int stage, double uncertainty, const ModeSpec& mode,
                                          const SmartPauseState& sp, const Json& payload, const std::string& ticket_id,
                                          const std::string& timestamp) {
  if (!should_gate(mode, sp, stage, uncertainty)) return std::nullopt;
  if (run.open_ticket) {
    throw InvariantViolation(fmt::format("run {} already has open ticket {}", run.run_id, *run.open_ticket));
  }
  if (run.status != RunStatus::Running) throw InvariantViolation("gate requested for a run that is not running");
  GateTicket t;
  t.id = ticket_id;
  t.run_id = run.run_id;
  t.stage = stage;
  t.payload_snapshot = payload;
  t.reason = mode.gated_stages.count(stage) ? "mode" : "smartpause";
  t.uncertainty = uncertainty;
  t.opened_at = timestamp;
  run.status = RunStatus::AwaitingGate;
  run.open_ticket = t.id;
  return t;
}

std::optional<ValidationReport> check_resolution(const GateTicket& ticket, const Resolution& r,
                                                 const ContractSet& contracts) {
  if (!ticket.open()) {
    throw Conflict(fmt::format("ticket {} was already resolved with {}", ticket.id, to_string(ticket.resolution->action)));
  }
  if (!ticket.allowed_actions.count(r.action)) {
    throw InvalidRequest(fmt::format("action {} is not allowed on ticket {}", to_string(r.action), ticket.id));
  }
  if (r.action == GateAction::Edit) {
    ValidationReport rep = contracts.validate_payload(StageId::of(ticket.stage), r.edited_payload);
    if (!rep.ok()) return rep;
  }
  return std::nullopt;
}

AppliedResolution apply_resolution(const RunState& run, const GateTicket& ticket, const ContractSet& contracts) {
  if (!ticket.resolution) throw InvalidRequest("ticket " + ticket.id + " has no resolution yet");
  if (run.open_ticket != ticket.id) throw InvariantViolation("ticket " + ticket.id + " is not the run's open ticket");
  const Resolution& r = *ticket.resolution;
  RunState base = run;
  base.status = RunStatus::Running;
  base.open_ticket.reset();
  base.interventions += 1;

  AppliedResolution out;
  out.outcome = r.action == GateAction::Approve ? GateOutcome::ApprovedUnchanged : GateOutcome::Overridden;
  switch (r.action) {
    case GateAction::Approve:
      out.state = advance(base, ticket.payload_snapshot, r.timestamp);
      break;
    case GateAction::Edit: {
      const ValidationReport rep = contracts.validate_payload(StageId::of(ticket.stage), r.edited_payload);
      if (!rep.ok()) throw InvalidRequest("edited payload fails the stage contract");
      out.state = advance(base, r.edited_payload, r.timestamp);
      break;
    }
    case GateAction::Guidance:
      out.state = advance(base, ticket.payload_snapshot, r.timestamp);
      if (!r.guidance_text.empty() && out.state.status == RunStatus::Running) {
        out.state.guidance[out.state.current_stage].push_back(r.guidance_text);
      }
      break;
    case GateAction::Reject:
      out.state = base;
      out.rerun = true;
      if (!r.guidance_text.empty()) out.state.guidance[ticket.stage].push_back(r.guidance_text);
      out.state.events.push_back({"gate_rejected", ticket.stage, r.guidance_text, "gate_feedback", ""});
      out.state.updated_at = r.timestamp;
      break;
  }
  return out;
}

namespace {

class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fs::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

std::int64_t EventLog::append(const std::string& kind, const std::string& run_id, const Json& data) {
  FileLock lock(fs::path(file_.string() + ".lock"));
  const std::int64_t seq = last_seq() + 1;
  Json ev{{"seq", seq}, {"kind", kind}, {"run_id", run_id}, {"data", data}};
  const std::string line = ev.dump() + "\n";
  fs::create_directories(file_.parent_path());
  const int fd = ::open(file_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open event log " + file_.string());
  const ssize_t n = ::write(fd, line.data(), line.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw Error("short write to event log");
  return seq;
}

std::vector<Json> EventLog::since(std::int64_t seq) const {
  std::vector<Json> out;
  if (!fs::exists(file_)) return out;
  for (const auto& line : text::split_lines(read_file(file_))) {
    if (text::trim(line).empty()) continue;
    Json ev = Json::parse(line, nullptr, false);
    if (ev.is_discarded()) continue;
    if (ev.value("seq", std::int64_t{0}) > seq) out.push_back(std::move(ev));
  }
  return out;
}

std::int64_t EventLog::last_seq() const {
  if (!fs::exists(file_)) return 0;
  std::int64_t last = 0;
  for (const auto& line : text::split_lines(read_file(file_))) {
    Json ev = Json::parse(line, nullptr, false);
    if (!ev.is_discarded() && ev.is_object()) last = std::max(last, ev.value("seq", std::int64_t{0}));
  }
  return last;
}

fs::path GateService::path_for(const std::string& ticket_id) const {
  const auto sep = ticket_id.rfind("--s");
  if (sep == std::string::npos || ticket_id.find('/') != std::string::npos) throw NotFound("no ticket " + ticket_id);
  return root_ / ticket_id.substr(0, sep) / "tickets" / (ticket_id + ".json");
}

std::string GateService::next_ticket_id(const std::string& run_id, int stage) const {
  return fmt::format("{}--s{:02d}-{}", run_id, stage, for_run(run_id).size() + 1);
}

void GateService::save(const GateTicket& t) const {
  const fs::path p = path_for(t.id);
  fs::create_directories(p.parent_path());
  write_file_atomic(p, t.to_json().dump(2));
}

void GateService::open(const GateTicket& ticket) {
  std::lock_guard<std::mutex> g(mu_);
  save(ticket);
  if (events_) events_->append("ticket.opened", ticket.run_id, {{"ticket", ticket.id}, {"stage", ticket.stage}});
}

GateTicket GateService::get(const std::string& ticket_id) const {
  const fs::path p = path_for(ticket_id);
  if (!fs::exists(p)) throw NotFound("no ticket " + ticket_id);
  return GateTicket::from_json(Json::parse(read_file(p)));
}

std::vector<GateTicket> GateService::for_run(const std::string& run_id) const {
  std::vector<GateTicket> out;
  const fs::path dir = root_ / run_id / "tickets";
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") out.push_back(GateTicket::from_json(Json::parse(read_file(e.path()))));
  }
  std::sort(out.begin(), out.end(), [](const GateTicket& a, const GateTicket& b) { return a.opened_at < b.opened_at || (a.opened_at == b.opened_at && a.id < b.id); });
  return out;
}

std::vector<GateTicket> GateService::list(bool open_only) const {
  std::vector<GateTicket> out;
  if (!fs::exists(root_)) return out;
  std::vector<fs::path> runs;
  for (const auto& e : fs::directory_iterator(root_)) {
    if (e.is_directory()) runs.push_back(e.path());
  }
  std::sort(runs.begin(), runs.end());
  for (const auto& r : runs) {
    for (auto& t : for_run(r.filename().string())) {
      if (!open_only || t.open()) out.push_back(std::move(t));
    }
  }
  return out;
}

GateTicket GateService::resolve(const std::string& ticket_id, Resolution r, const ContractSet& contracts) {
  std::lock_guard<std::mutex> g(mu_);
  FileLock lock(fs::path(path_for(ticket_id).string() + ".lock"));
  GateTicket t = get(ticket_id);
  if (auto report = check_resolution(t, r, contracts)) {
    t.validation_report = report->to_json();
    save(t);
    if (events_) events_->append("ticket.edit_rejected", t.run_id, {{"ticket", t.id}, {"report", t.validation_report}});
    return t;
  }
  t.resolution = std::move(r);
  t.validation_report = nullptr;
  save(t);
  if (events_) {
    events_->append("ticket.resolved", t.run_id,
                    {{"ticket", t.id}, {"stage", t.stage}, {"action", to_string(t.resolution->action)}});
  }
  return t;
}

void GateService::mark_applied(const std::string& ticket_id) {
  std::lock_guard<std::mutex> g(mu_);
  GateTicket t = get(ticket_id);
  t.applied = true;
  save(t);
}

}  // namespace labloop::hitl
