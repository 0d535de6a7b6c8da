#include <doctest.h>

#include <random>

#include "labloop/common/error.hpp"
#include "labloop/core/checkpoint.hpp"
#include "labloop/core/contract.hpp"
#include "labloop/core/section_lengths.hpp"
#include "labloop/core/stage.hpp"
#include "labloop/core/transitions.hpp"
#include "testkit.hpp"

using namespace labloop;

namespace {

Json decision_payload(DecisionKind k) {
  return Json{{"decision", to_string(k)}, {"justification", "test"}, {"evidence_refs", Json::array()}};
}

// Drives stages 12..15 repeatedly with a fixed decision stream; stops at stage 16.
RunState drive_loop(RunState s, const std::vector<DecisionKind>& stream) {
  std::size_t i = 0;
  while (s.current_stage != stages::kPaperOutline) {
    if (s.current_stage == stages::kResearchDecision) {
      s = labloop::advance(s, decision_payload(stream[i++ % stream.size()]));
    } else {
      s = labloop::advance(s, Json::object());
    }
  }
  return s;
}

}  // namespace

TEST_CASE("stage table") {
  CHECK(StageId::all().size() == 23);
  CHECK(StageId::of(8).dir_name() == "08-Hypothesis_Gen");
  CHECK(StageId::of(1).phase() == Phase::A);
  CHECK(StageId::of(23).phase() == Phase::H);
  CHECK_THROWS_AS(StageId::of(0), ConfigError);
  CHECK_THROWS_AS(StageId::of(24), ConfigError);
  for (const auto& s : StageId::all()) CHECK(StageId::by_name(s.name())->ordinal() == s.ordinal());
}

TEST_CASE("phase boundaries are the last stage of each phase") {
  std::vector<int> expected;
  for (int i = 1; i <= 23; ++i) {
    if (i == 23 || StageId::of(i).phase() != StageId::of(i + 1).phase()) expected.push_back(i);
  }
  const auto got = phase_boundary_stages();
  CHECK(std::vector<int>(got.begin(), got.end()) == expected);
}

TEST_CASE("transition targets") {
  CHECK(transition_targets(15) == std::set<int>{8, 12, 16});
  CHECK(transition_targets(23).empty());
  for (int i = 1; i < 23; ++i) {
    if (i != 15) CHECK(transition_targets(i) == std::set<int>{i + 1});
  }
}

TEST_CASE("resolve_decision honors and exhausts budgets") {
  RunBudget b;
  CHECK(resolve_decision(b, DecisionKind::Pivot).applied == DecisionKind::Pivot);
  b.pivots_used = 1;
  auto r = resolve_decision(b, DecisionKind::Pivot);
  CHECK(r.applied == DecisionKind::Proceed);
  CHECK(r.forced);
  b.refines_used = 10;
  r = resolve_decision(b, DecisionKind::Refine);
  CHECK(r.applied == DecisionKind::Proceed);
  CHECK(r.forced);
  CHECK_FALSE(resolve_decision(b, DecisionKind::Proceed).forced);
}

TEST_CASE("random decision streams stay within the loop bound") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    RunState s;
    s.budget.max_pivots = 1 + static_cast<int>(rng() % 4);
    s.budget.max_refines = static_cast<int>(rng() % 6);
    s.current_stage = stages::kHypothesisGen;
    std::vector<DecisionKind> stream(1 + rng() % 20);
    for (auto& d : stream) d = static_cast<DecisionKind>(rng() % 3);

    // Oracle: replay the stream counting visits per attempt.
    int attempt_visits = 0, pivots = 0, refines = 0, visits = 0;
    std::size_t i = 0;
    for (;;) {
      ++visits;
      ++attempt_visits;
      const auto d = stream[i++ % stream.size()];
      if (d == DecisionKind::Refine && refines < s.budget.max_refines) {
        ++refines;
      } else if (d == DecisionKind::Pivot && pivots + 1 < s.budget.max_pivots) {
        ++pivots;
        refines = 0;
        attempt_visits = 0;
      } else {
        break;
      }
    }

    const RunState end = drive_loop(s, stream);
    CHECK(end.stage15_visits == visits);
    CHECK(end.stage15_visits <= s.budget.max_pivots * (s.budget.max_refines + 1));
    CHECK(end.budget.pivots_used == pivots);
    CHECK(end.budget.refines_used == refines);
  }
}

TEST_CASE("pivot resets the refine counter and archives the attempt") {
  RunState s;
  s.current_stage = stages::kResearchDecision;
  s.budget.refines_used = 4;
  s.artifacts[9] = Json{{"x", 1}};
  s.artifacts[14] = Json{{"y", 2}};
  const auto next = labloop::advance(s, decision_payload(DecisionKind::Pivot));
  CHECK(next.current_stage == stages::kHypothesisGen);
  CHECK(next.budget.refines_used == 0);
  CHECK(next.budget.pivots_used == 1);
  REQUIRE(next.archived.size() == 1);
  CHECK(next.archived[0].label == "attempt-1");
  CHECK(next.archived[0].artifacts.count(9) == 1);
  CHECK(next.archived[0].artifacts.count(15) == 1);
  CHECK(next.artifacts.count(9) == 0);
}

TEST_CASE("advance rejects non-running runs and missing decisions") {
  RunState s;
  s.status = RunStatus::AwaitingGate;
  CHECK_THROWS_AS(labloop::advance(s, Json::object()), TransitionError);
  RunState d;
  d.current_stage = 15;
  CHECK_THROWS(labloop::advance(d, Json::object()));
  RunState bad;
  bad.budget.refines_used = 11;
  CHECK_THROWS_AS(labloop::advance(bad, Json::object()), TransitionError);
}

TEST_CASE("stage 23 completes the run") {
  RunState s;
  s.current_stage = 23;
  CHECK(labloop::advance(s, Json::object()).status == RunStatus::Completed);
}

TEST_CASE("checkpoint round trip and tamper detection") {
  RunState s;
  s.run_id = "r1";
  s.topic = "t";
  s.artifacts[1] = Json{{"a", 1.5}};
  s.guidance[8] = {"be bolder"};
  s.events.push_back({"pivot", 15, "x", "decision", ""});
  const auto cp = checkpoint(s);
  CHECK(cp.content_digest == sha256_hex(cp.run_state));
  CHECK(resume(Checkpoint::from_bytes(cp.to_bytes())) == s);

  auto tampered = cp;
  tampered.run_state[tampered.run_state.size() / 2] ^= 1;
  CHECK_THROWS_AS(resume(tampered), CorruptCheckpoint);

  auto future = cp;
  future.schema_version = kCheckpointSchemaVersion + 1;
  CHECK_THROWS_AS(resume(future), ConfigError);

  testkit::TempDir dir;
  write_checkpoint(dir.path(), cp, 1);
  CHECK(fs::exists(dir / "checkpoints/0001.ckpt"));
  CHECK(resume(read_latest_checkpoint(dir.path())) == s);
}

TEST_CASE("every stage has a contract") {
  const auto set = ContractSet::load_dir(testkit::config_dir() / "contracts");
  CHECK(set.missing().empty());
  CHECK_NOTHROW(set.self_check());
}

TEST_CASE("contract validation reports type and rule failures") {
  const auto c = StageContract::from_json(Json::parse(R"({
    "stage": 8, "error_namespace": "E-HYPO-",
    "input": [],
    "output": [
      {"name": "hypotheses", "type": "array", "rule": {"min_items": 2}},
      {"name": "note", "type": "string", "required": false}
    ],
    "acceptance": []
  })"));
  CHECK(validate_against(c, Json{{"hypotheses", Json::array({1, 2})}}).ok());
  CHECK_FALSE(validate_against(c, Json{{"hypotheses", Json::array({1})}}).ok());
  CHECK_FALSE(validate_against(c, Json{{"hypotheses", "x"}}).ok());
  CHECK_FALSE(validate_against(c, Json::object()).ok());
  CHECK_FALSE(validate_against(c, Json{{"hypotheses", Json::array({1, 2})}, {"note", 3}}).ok());
}

TEST_CASE("section lengths") {
  const std::vector<SectionTarget> targets{{"abstract", 3, 5}, {"method", 2, 4}};
  const Json doc{{"sections", Json::array({Json{{"name", "Abstract"}, {"text", "one two"}},
                                          Json{{"name", "Method"}, {"text", "a b c"}}})}};
  const auto rows = enforce_section_lengths(doc, targets);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].actual == 2);
  CHECK(rows[0].verdict == LengthVerdict::Under);
  CHECK(rows[1].verdict == LengthVerdict::In);
  CHECK(default_section_targets().size() == 8);
}
