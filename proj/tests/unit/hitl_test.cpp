#include <doctest.h>
#include <httplib.h>

#include "labloop/common/error.hpp"
#include "labloop/core/stage.hpp"
#include "labloop/hitl/gates.hpp"
#include "labloop/hitl/modes.hpp"
#include "labloop/hitl/server.hpp"
#include "labloop/hitl/smartpause.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::hitl;

namespace {

std::set<int> range(int a, int b) {
  std::set<int> s;
  for (int i = a; i <= b; ++i) s.insert(i);
  return s;
}

GateTicket ticket_for(int stage, const Json& payload) {
  GateTicket t;
  t.id = "r--s" + std::to_string(stage) + "-1";
  t.run_id = "r";
  t.stage = stage;
  t.payload_snapshot = payload;
  return t;
}

RunState parked_at(int stage) {
  RunState s;
  s.run_id = "r";
  s.current_stage = stage;
  return s;
}

}  // namespace

TEST_CASE("mode table") {
  const auto boundaries = phase_boundary_stages();
  const std::set<int> phase_ends(boundaries.begin(), boundaries.end());
  CHECK(stages_for_mode(InterventionMode::FullAuto).empty());
  CHECK(stages_for_mode(InterventionMode::GateOnly) == std::set<int>{5, 9, 20});
  CHECK(stages_for_mode(InterventionMode::CoPilot) == std::set<int>{5, 8, 9, 14, 17, 20});
  CHECK(mode_spec(InterventionMode::CoPilot).smartpause);
  CHECK_FALSE(mode_spec(InterventionMode::GateOnly).smartpause);
  CHECK(stages_for_mode(InterventionMode::Thorough) == phase_ends);
  CHECK(stages_for_mode(InterventionMode::StepByStep) == range(1, 23));
  CHECK(stages_for_mode(InterventionMode::PreExperiment) == std::set<int>{5, 8, 9});
  CHECK(stages_for_mode(InterventionMode::PostExperiment) == std::set<int>{14, 17, 20});
  CHECK(stages_for_mode(InterventionMode::Thorough, std::set<int>{3}) == std::set<int>{3});
  CHECK(all_modes().size() == 7);
  for (auto m : all_modes()) CHECK(mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(mode_from_string("Turbo"), InvalidRequest);
}

TEST_CASE("shipped thorough stages equal the phase boundaries") {
  const auto& svc = testkit::services();
  REQUIRE(svc.settings.thorough_stages);
  const auto b = phase_boundary_stages();
  CHECK(*svc.settings.thorough_stages == std::set<int>(b.begin(), b.end()));
}

TEST_CASE("smartpause update rule") {
  SmartPauseState sp;
  CHECK(sp.theta(5) == 0.5);
  const auto up = smartpause_update(sp, 5, GateOutcome::ApprovedUnchanged);
  CHECK(up.theta(5) == doctest::Approx(0.52).epsilon(1e-12));
  CHECK(up.stages.at(5).approvals == 1);
  const auto down = smartpause_update(sp, 5, GateOutcome::Overridden);
  CHECK(down.theta(5) == doctest::Approx(0.42).epsilon(1e-12));
  CHECK(down.theta(6) == 0.5);

  SmartPauseState low;
  low.stages[1].theta = 0.01;
  CHECK(smartpause_update(low, 1, GateOutcome::Overridden).theta(1) == 0.0);
  SmartPauseState high;
  high.stages[1].theta = 0.999;
  CHECK(smartpause_update(high, 1, GateOutcome::ApprovedUnchanged).theta(1) == 1.0);

  testkit::TempDir dir;
  up.save(dir / "sp.json");
  CHECK(SmartPauseState::load_or_default(dir / "sp.json").theta(5) == up.theta(5));
}

TEST_CASE("should_gate combines the mode set and smartpause") {
  SmartPauseState sp;
  CHECK(should_gate(mode_spec(InterventionMode::GateOnly), sp, 5, 0.0));
  CHECK_FALSE(should_gate(mode_spec(InterventionMode::GateOnly), sp, 6, 0.99));
  CHECK(should_gate(mode_spec(InterventionMode::CoPilot), sp, 6, 0.51));
  CHECK_FALSE(should_gate(mode_spec(InterventionMode::CoPilot), sp, 6, 0.5));
}

TEST_CASE("opening a gate parks the run; a second open ticket is an invariant violation") {
  RunState s = parked_at(5);
  SmartPauseState sp;
  const auto t = maybe_open_gate(s, 5, 0.0, mode_spec(InterventionMode::GateOnly), sp, Json::object(), "r--s05-1", "ts");
  REQUIRE(t);
  CHECK(s.status == RunStatus::AwaitingGate);
  CHECK(s.open_ticket == std::optional<std::string>("r--s05-1"));
  CHECK_THROWS_AS(maybe_open_gate(s, 5, 0.0, mode_spec(InterventionMode::GateOnly), sp, Json::object(), "x", "ts"),
                  InvariantViolation);
  RunState free = parked_at(6);
  CHECK_FALSE(maybe_open_gate(free, 6, 0.0, mode_spec(InterventionMode::GateOnly), sp, Json::object(), "y", "ts"));
  CHECK(free.status == RunStatus::Running);
}

TEST_CASE("resolutions") {
  const auto& contracts = testkit::services().contracts;
  RunState s = parked_at(8);
  s.status = RunStatus::AwaitingGate;
  auto t = ticket_for(8, Json{{"hypotheses", Json::array()}});
  s.open_ticket = t.id;

  t.resolution = Resolution{GateAction::Reject, nullptr, "more ambitious", "me", "ts"};
  auto rej = apply_resolution(s, t, contracts);
  CHECK(rej.rerun);
  CHECK(rej.state.guidance.at(8) == std::vector<std::string>{"more ambitious"});
  CHECK(rej.state.interventions == 1);
  CHECK(rej.outcome == GateOutcome::Overridden);
  CHECK(rej.state.events.back().kind == "gate_rejected");

  t.resolution = Resolution{GateAction::Approve, nullptr, "", "me", "ts"};
  auto app = apply_resolution(s, t, contracts);
  CHECK_FALSE(app.rerun);
  CHECK(app.outcome == GateOutcome::ApprovedUnchanged);
  CHECK(app.state.interventions == 1);

  auto open = ticket_for(8, Json::object());
  CHECK(check_resolution(open, Resolution{GateAction::Edit, Json{{"nope", 1}}, "", "", ""}, contracts).has_value());
  open.allowed_actions = {GateAction::Approve};
  CHECK_THROWS_AS(check_resolution(open, Resolution{GateAction::Reject, nullptr, "x", "", ""}, contracts), InvalidRequest);
  CHECK_THROWS_AS(check_resolution(t, Resolution{GateAction::Approve, nullptr, "", "", ""}, contracts), Conflict);
}

TEST_CASE("gate service: first writer wins, ids are per run") {
  testkit::TempDir dir;
  EventLog events(dir / "events.journal");
  GateService svc(dir / "runs", &events);
  const auto& contracts = testkit::services().contracts;
  CHECK(svc.next_ticket_id("r", 5) == "r--s05-1");
  svc.open(ticket_for(5, Json::object()));
  CHECK(svc.next_ticket_id("r", 9) == "r--s09-2");
  const std::string id = ticket_for(5, Json::object()).id;
  CHECK(svc.list(true).size() == 1);
  svc.resolve(id, Resolution{GateAction::Approve, nullptr, "", "a", "ts"}, contracts);
  CHECK_THROWS_AS(svc.resolve(id, Resolution{GateAction::Approve, nullptr, "", "b", "ts"}, contracts), Conflict);
  CHECK(svc.get(id).resolution->actor == "a");
  CHECK(svc.list(true).empty());
  CHECK(svc.list(false).size() == 1);
  CHECK_THROWS_AS(svc.get("missing--s01-1"), NotFound);
  CHECK(events.last_seq() >= 2);
}

TEST_CASE("event log sequence numbers") {
  testkit::TempDir dir;
  EventLog log(dir / "e.journal");
  CHECK(log.append("a", "r", Json::object()) == 1);
  CHECK(log.append("b", "r", Json::object()) == 2);
  const auto after = log.since(1);
  REQUIRE(after.size() == 1);
  CHECK(after[0]["kind"] == "b");
}

TEST_CASE("http api over a parked run") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  cfg.mode = "CoPilot";
  testkit::Rig rig(cfg);
  const auto parked = rig.orchestrator.start(cfg);
  REQUIRE(parked.status == RunStatus::AwaitingGate);
  const std::string ticket = *parked.open_ticket;

  ManualClock clock(parse_iso8601("2026-01-15T10:00:00Z"));
  std::vector<std::string> resolved;
  ServerOptions opts{rig.workspace.store.runs_root(), "secret", 1,
                     [&](const GateTicket& t) { resolved.push_back(t.id); }};
  GateServer server(opts, rig.workspace.gates, rig.workspace.events, testkit::services().contracts, clock);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client cli("127.0.0.1", port);

  CHECK(cli.Get("/api/v1/runs")->status == 401);
  const httplib::Headers auth{{"Authorization", "Bearer secret"}};

  auto runs = cli.Get("/api/v1/runs", auth);
  REQUIRE(runs);
  CHECK(runs->status == 200);
  const Json runs_doc = Json::parse(runs->body);
  CHECK(runs_doc["api_version"] == 1);
  CHECK(runs_doc["data"].size() == 1);

  auto detail = Json::parse(cli.Get("/api/v1/runs/golden", auth)->body);
  CHECK(detail["data"]["tickets"].size() == 1);
  CHECK(cli.Get("/api/v1/runs/none", auth)->status == 404);

  auto open = Json::parse(cli.Get("/api/v1/tickets", auth)->body);
  REQUIRE(open["data"].size() == 1);
  CHECK(open["data"][0]["id"] == ticket);

  CHECK(cli.Get("/api/v1/contracts/5", auth)->status == 200);
  CHECK(cli.Get("/api/v1/contracts/99", auth)->status == 404);

  const std::string path = "/api/v1/tickets/" + ticket + "/resolution";
  CHECK(cli.Post(path, auth, R"({"api_version": 9, "action": "approve"})", "application/json")->status == 400);
  auto bad_edit = cli.Post(path, auth, R"({"api_version": 1, "action": "edit", "edited_payload": {"x": 1}})",
                           "application/json");
  CHECK(bad_edit->status == 422);
  CHECK(Json::parse(bad_edit->body)["error"]["code"] == "contract_violation");
  CHECK(resolved.empty());

  auto ok = cli.Post(path, auth, R"({"api_version": 1, "action": "approve", "actor": "ops"})", "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(resolved == std::vector<std::string>{ticket});
  auto again = cli.Post(path, auth, R"({"api_version": 1, "action": "approve"})", "application/json");
  CHECK(again->status == 409);

  auto evs = Json::parse(cli.Get("/api/v1/events?since=0", auth)->body);
  CHECK(evs["data"]["events"].size() > 0);
  const auto last = evs["data"]["last_seq"].get<std::int64_t>();
  auto empty = Json::parse(cli.Get("/api/v1/events?since=" + std::to_string(last) + "&timeout=0", auth)->body);
  CHECK(empty["data"]["events"].empty());
  server.stop();
}
