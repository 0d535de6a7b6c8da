#include <doctest.h>

#include <chrono>

#include "labloop/agents/backend.hpp"
#include "labloop/common/error.hpp"
#include "labloop/evolution/lessons.hpp"
#include "labloop/verify/claims.hpp"
#include "labloop/verify/registry.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::pipeline;

namespace {

const std::set<std::string> kVolatile{"config.json"};

// Copy of the golden fixture with `edit` applied to its responses.
fs::path edited_fixture(const testkit::TempDir& dir, const std::function<void(Json&)>& edit) {
  Json doc = Json::parse(read_file(testkit::fixture_dir() / "scripted" / "golden.json"));
  edit(doc["responses"]);
  const auto path = dir / "fixture.json";
  write_file_atomic(path, doc.dump());
  return path;
}

}  // namespace

TEST_CASE("golden run completes and its paper verifies") {
  testkit::TempDir dir;
  const auto cfg = testkit::golden_config(dir.path());
  testkit::Rig rig(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = rig.orchestrator.start(cfg);
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
  REQUIRE(s.status == RunStatus::Completed);
  CHECK(exit_code_for(s) == 0);
  CHECK(s.artifacts.size() == 23);

  const auto run = rig.workspace.store.run_dir("golden");
  for (const char* f : {"paper/main.tex", "paper/references.bib", "paper/manuscript.json", "paper/citations.json",
                        "registry.json", "transcript.jsonl", "checkpoints/latest.ckpt"}) {
    CHECK_MESSAGE(fs::exists(run / f), f);
  }
  const auto reg = verify::VerifiedRegistry::from_json(Json::parse(read_file(run / "registry.json")));
  CHECK(reg.find("smoothed::accuracy"));
  const auto manuscript = Json::parse(read_file(run / "paper/manuscript.json"));
  const auto v = verify::verify_document(manuscript, reg, testkit::services().claims);
  CHECK(v.accepted);

  const auto bib = read_file(run / "paper/references.bib");
  CHECK(bib.find("guo2017") != std::string::npos);
  CHECK(bib.find("chen2023") == std::string::npos);
  CHECK(read_file(run / "paper/main.tex").find("chen2023") == std::string::npos);
}

TEST_CASE("golden runs are byte-identical") {
  testkit::TempDir a, b;
  for (auto* d : {&a, &b}) {
    const auto cfg = testkit::golden_config(d->path());
    testkit::Rig rig(cfg);
    REQUIRE(rig.orchestrator.start(cfg).status == RunStatus::Completed);
  }
  const auto ta = testkit::snapshot_tree(a / "runs", kVolatile);
  const auto tb = testkit::snapshot_tree(b / "runs", kVolatile);
  CHECK(ta.size() > 30);
  CHECK(ta == tb);
  CHECK(testkit::snapshot_tree(a / "state") == testkit::snapshot_tree(b / "state"));
}

TEST_CASE("stop and resume reproduces the uninterrupted run") {
  testkit::TempDir ref;
  {
    const auto cfg = testkit::golden_config(ref.path());
    testkit::Rig rig(cfg);
    REQUIRE(rig.orchestrator.start(cfg).status == RunStatus::Completed);
  }
  const auto want = testkit::snapshot_tree(ref / "runs", kVolatile);
  for (int k : {3, 9, 14, 17}) {
    CAPTURE(k);
    testkit::TempDir dir;
    const auto cfg = testkit::golden_config(dir.path());
    {
      testkit::Rig rig(cfg);
      RunOptions opts;
      opts.stop_after_stage = k;
      const auto s = rig.orchestrator.start(cfg, opts);
      CHECK(s.status == RunStatus::Running);
      CHECK(s.artifacts.count(k) == 1);
    }
    // A fresh process: new backend, new clock, state only from disk.
    testkit::Rig rig(cfg);
    CHECK(rig.orchestrator.resume("golden").status == RunStatus::Completed);
    CHECK(testkit::snapshot_tree(dir / "runs", kVolatile) == want);
  }
}

TEST_CASE("resuming a completed run is a no-op") {
  testkit::TempDir dir;
  const auto cfg = testkit::golden_config(dir.path());
  testkit::Rig rig(cfg);
  rig.orchestrator.start(cfg);
  const auto before = testkit::snapshot_tree(dir / "runs");
  CHECK(rig.orchestrator.resume("golden").status == RunStatus::Completed);
  CHECK(testkit::snapshot_tree(dir / "runs") == before);
  CHECK_THROWS_AS(rig.orchestrator.resume("nope"), NotFound);
}

TEST_CASE("invalid config writes nothing") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  testkit::Rig rig(cfg);
  cfg.mode = "Turbo";
  CHECK_THROWS_AS(rig.orchestrator.start(cfg), InvalidRequest);
  CHECK_FALSE(fs::exists(dir / "runs" / "golden"));
}

TEST_CASE("copilot gates: inline approvals complete the run") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  cfg.mode = "CoPilot";
  testkit::Rig rig(cfg);
  std::vector<int> seen;
  RunOptions opts;
  opts.on_gate = [&](const hitl::GateTicket& t) -> std::optional<hitl::Resolution> {
    seen.push_back(t.stage);
    return hitl::Resolution{hitl::GateAction::Approve, nullptr, "", "test", ""};
  };
  const auto s = rig.orchestrator.start(cfg, opts);
  CHECK(s.status == RunStatus::Completed);
  for (int stage : {5, 8, 9, 14, 17, 20}) CHECK(std::count(seen.begin(), seen.end(), stage) >= 1);
  CHECK(s.interventions == static_cast<int>(seen.size()));
  CHECK(fs::exists(dir / "state" / "smartpause.json"));
}

TEST_CASE("parked run resumes after an out-of-band resolution; reject re-runs with guidance") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  cfg.mode = "PreExperiment";
  {
    testkit::Rig rig(cfg);
    const auto s = rig.orchestrator.start(cfg);
    REQUIRE(s.status == RunStatus::AwaitingGate);
    CHECK(exit_code_for(s) == 5);
    CHECK(*s.open_ticket == "golden--s05-1");
    rig.workspace.gates.resolve("golden--s05-1", {hitl::GateAction::Approve, nullptr, "", "ops", "t"},
                                testkit::services().contracts);
  }
  testkit::Rig rig(cfg);
  auto s = rig.orchestrator.resume("golden");
  REQUIRE(s.status == RunStatus::AwaitingGate);
  REQUIRE(s.open_ticket);
  CHECK(*s.open_ticket == "golden--s08-2");
  rig.workspace.gates.resolve(*s.open_ticket, {hitl::GateAction::Reject, nullptr, "Prefer a smaller claim", "ops", "t"},
                              testkit::services().contracts);

  testkit::Rig again(cfg);
  s = again.orchestrator.resume("golden");
  REQUIRE(s.status == RunStatus::AwaitingGate);
  CHECK(*s.open_ticket == "golden--s08-3");
  CHECK(s.interventions == 2);
  auto* be = dynamic_cast<agents::ScriptedBackend*>(again.session.backend.get());
  REQUIRE(be);
  bool guided = false;
  for (const auto& r : be->requests()) {
    if (r.tag.rfind("stage08", 0) == 0) guided = guided || r.prompt.user.find("Prefer a smaller claim") != std::string::npos;
  }
  CHECK(guided);
}

TEST_CASE("a fabricated strict value fails the run as unverified") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  cfg.fixture = edited_fixture(dir, [](Json& r) {
    auto& abstract = r["stage17"][0]["manuscript"]["sections"][0]["text"];
    abstract = text::replace_all(abstract.get<std::string>(), "0.853", "0.913");
  });
  testkit::Rig rig(cfg);
  const auto s = rig.orchestrator.start(cfg);
  REQUIRE(s.status == RunStatus::Failed);
  CHECK(s.failure["stage"] == 17);
  CHECK(s.failure["code"].get<std::string>().find("UNVERIFIED") != std::string::npos);
  CHECK(s.failure["message"].get<std::string>().find("0.913") != std::string::npos);
  CHECK(exit_code_for(s) == 6);
  // The failure leaves a verification lesson behind.
  evolution::LessonStore lessons(dir / "state" / "lessons.journal");
  bool verification = false;
  for (const auto& l : lessons.all()) verification = verification || l.category == "verification";
  CHECK(verification);
}

TEST_CASE("a transport failure fails the stage with its namespace") {
  testkit::TempDir dir;
  auto cfg = testkit::golden_config(dir.path());
  cfg.fixture = edited_fixture(dir, [](Json& r) { r["stage02"] = Json::array({Json{{"$error", "transport"}}}); });
  testkit::Rig rig(cfg);
  const auto s = rig.orchestrator.start(cfg);
  REQUIRE(s.status == RunStatus::Failed);
  CHECK(s.failure["stage"] == 2);
  CHECK(s.failure["code"].get<std::string>().find("TRANSPORT") != std::string::npos);
  CHECK(exit_code_for(s) == 4);
}

TEST_CASE("the golden run repairs its first execution") {
  testkit::TempDir dir;
  const auto cfg = testkit::golden_config(dir.path());
  testkit::Rig rig(cfg);
  const auto s = rig.orchestrator.start(cfg);
  REQUIRE(s.status == RunStatus::Completed);
  bool repaired = false;
  for (const auto& e : s.events) repaired = repaired || e.kind == "repair_failure";
  CHECK(repaired);
  CHECK(s.artifacts.at(13).dump().find("\"degenerate\":false") != std::string::npos);
}
