#include <doctest.h>

#include "labloop/common/error.hpp"
#include "labloop/debate/panel.hpp"
#include "labloop/verify/registry.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::debate;

namespace {

Json hyp(const std::string& id) {
  return {{"id", id},
          {"statement", "statement " + id},
          {"falsifiable", true},
          {"testability_criteria", Json::array({"accuracy rises"})},
          {"required_baselines", Json::array({"baseline"})}};
}

agents::Vars all_vars(const agents::PromptBank& bank) {
  agents::Vars v;
  auto fill = [&](const agents::PromptTemplate& t) {
    for (const auto& p : t.placeholders) v[p] = "x";
  };
  for (const auto& [_, t] : bank.stages) fill(t);
  for (const auto& [_, t] : bank.subprompts) fill(t);
  return v;
}

verify::VerifiedRegistry small_registry() {
  Json recs = Json::array();
  for (int s = 0; s < 2; ++s) recs.push_back({{"condition", "smoothed"}, {"metric", "ece"}, {"seed", s}, {"value", 0.04}});
  return verify::VerifiedRegistry::build({{"r1", {{"records", recs}}}});
}

struct PanelFixture {
  agents::BankSet banks = agents::BankSet::load_dir(testkit::config_dir() / "prompts");
  agents::DomainRegistry domains = agents::DomainRegistry::load_dir(testkit::config_dir() / "domains");
  agents::TranscriptLog log;
};

}  // namespace

TEST_CASE("panel config takes the first K roles and rejects small or duplicate panels") {
  const auto domains = agents::DomainRegistry::load_dir(testkit::config_dir() / "domains");
  const auto cfg = make_panel_config(PanelKind::Hypothesis, domains.get("ml"), 3);
  CHECK(cfg.k() == 3);
  CHECK_NOTHROW(cfg.check());
  PanelConfig one{PanelKind::Hypothesis, {{"A", "a"}}, "hypothesis_synthesize", false};
  CHECK_THROWS_AS(one.check(), ConfigError);
  PanelConfig dup{PanelKind::Hypothesis, {{"A", "a"}, {"A", "b"}}, "hypothesis_synthesize", false};
  CHECK_THROWS_AS(dup.check(), ConfigError);
}

TEST_CASE("two rounds: every role drafts, then every role critiques") {
  PanelFixture f;
  agents::ScriptedBackend be(Json{{"responses",
                                   {{"stage08/draft", Json::array({R"({"idea": 1})"})},
                                    {"stage08/critique/B", Json::array({R"({"objections": []})"})},
                                    {"stage08/critique", Json::array({R"({"objections": ["weak"]})"})}}}});
  PanelConfig cfg{PanelKind::Hypothesis, {{"C", "c"}, {"A", "a"}, {"B", "b"}}, "hypothesis_synthesize", false};
  PanelContext ctx{&f.banks.for_domain("ml"), &be, &f.log, all_vars(f.banks.for_domain("ml")), {}};
  const auto out = run_panel(cfg, ctx);
  REQUIRE(out.size() == 3);
  const auto reqs = be.requests();
  REQUIRE(reqs.size() == 6);
  for (int i = 0; i < 3; ++i) CHECK(reqs[i].tag.find("/draft/") != std::string::npos);
  for (int i = 3; i < 6; ++i) CHECK(reqs[i].tag.find("/critique/") != std::string::npos);
  // Critique prompts show the other roles' drafts.
  CHECK(reqs[3].prompt.user.find("### A") != std::string::npos);
  CHECK(disagreement(out) == doctest::Approx(2.0 / 3.0));
  const auto ordered = canonical_order(out);
  CHECK(ordered[0].role == "A");
  CHECK(ordered[2].role == "C");
}

TEST_CASE("a failing role raises PanelError naming it") {
  PanelFixture f;
  agents::ScriptedBackend be(Json{{"responses",
                                   {{"stage08/draft/B", Json::array({Json{{"$error", "transport"}}})},
                                    {"*", Json::array({R"({"ok": true})"})}}}});
  PanelConfig cfg{PanelKind::Hypothesis, {{"A", "a"}, {"B", "b"}}, "hypothesis_synthesize", false};
  PanelContext ctx{&f.banks.for_domain("ml"), &be, &f.log, all_vars(f.banks.for_domain("ml")), {}};
  try {
    run_panel(cfg, ctx);
    FAIL("expected PanelError");
  } catch (const PanelError& e) {
    CHECK(e.role() == "B");
  }
}

TEST_CASE("hypothesis set invariants") {
  CHECK(hypothesis_set_problems(Json::array({hyp("H1"), hyp("H2")})).empty());
  CHECK_FALSE(hypothesis_set_problems(Json::array({hyp("H1")})).empty());
  CHECK_FALSE(hypothesis_set_problems(Json::array({hyp("1"), hyp("2"), hyp("3"), hyp("4"), hyp("5")})).empty());
  auto bad = hyp("H2");
  bad.erase("falsifiable");
  CHECK_FALSE(hypothesis_set_problems(Json::array({hyp("H1"), bad})).empty());
}

TEST_CASE("synthesis re-asks once, then gives up") {
  PanelFixture f;
  const Json good{{"hypotheses", Json::array({hyp("H1"), hyp("H2")})}};
  const Json short_set{{"hypotheses", Json::array({hyp("H1")})}};
  PanelContext base{&f.banks.for_domain("ml"), nullptr, &f.log, all_vars(f.banks.for_domain("ml")), {}};

  agents::ScriptedBackend recover(Json{{"responses", {{"stage08/synthesize", Json::array({short_set.dump(), good.dump()})}}}});
  auto ctx = base;
  ctx.backend = &recover;
  CHECK(synthesize_hypotheses({}, ctx).hypotheses.size() == 2);
  CHECK(recover.requests().size() == 2);

  agents::ScriptedBackend stubborn(Json{{"responses", {{"stage08/synthesize", Json::array({short_set.dump()})}}}});
  ctx.backend = &stubborn;
  CHECK_THROWS_AS(synthesize_hypotheses({}, ctx), PanelError);
  CHECK(stubborn.requests().size() == 2);
}

TEST_CASE("grounding demotes unreferenced support") {
  const auto reg = small_registry();
  ResultAssessment a;
  a.verdicts = Json::array({Json{{"hypothesis", "H1"}, {"verdict", "supported"}, {"registry_refs", Json::array({"smoothed::ece"})}},
                            Json{{"hypothesis", "H2"}, {"verdict", "supported"}, {"registry_refs", Json::array({"made::up"})}}});
  a.supported_claims = Json::array({Json{{"claim", "grounded"}, {"registry_refs", Json::array({"smoothed::ece"})}},
                                    Json{{"claim", "floating"}, {"registry_refs", Json::array()}}});
  ground_assessment(a, reg);
  CHECK(a.verdicts[0]["verdict"] == "supported");
  CHECK(a.verdicts[1]["verdict"] == "inconclusive");
  CHECK(a.verdicts[1]["registry_refs"].empty());
  CHECK(a.supported_claims.size() == 1);
  CHECK(a.unsupported_claims.size() == 1);
  CHECK(a.unsupported_claims[0]["claim"] == "floating");
}

TEST_CASE("assessment needs exactly one verdict per hypothesis") {
  PanelFixture f;
  HypothesisSet hs;
  hs.hypotheses = Json::array({hyp("H1"), hyp("H2")});
  const Json missing{{"verdicts", Json::array({Json{{"hypothesis", "H1"}, {"verdict", "refuted"}}})}, {"quality_rating", 5}};
  agents::ScriptedBackend be(Json{{"responses", {{"stage14/synthesize", Json::array({missing.dump()})}}}});
  PanelContext ctx{&f.banks.for_domain("ml"), &be, &f.log, all_vars(f.banks.for_domain("ml")), {}};
  CHECK_THROWS_AS(synthesize_assessment({}, hs, small_registry(), ctx), PanelError);
}

TEST_CASE("registry view") {
  const auto v = registry_view(small_registry());
  CHECK(v["smoothed::ece"]["n"] == 2);
  CHECK(v["smoothed::ece"]["mean"].get<double>() == doctest::Approx(0.04));
}
