#include <doctest.h>

#include "labloop/agents/backend.hpp"
#include "labloop/agents/domain.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/error.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::agents;

TEST_CASE("declared placeholders are substituted, other braces are literal") {
  const std::string tpl = "Topic {topic}; return {\"k\": {x}} and {undeclared}";
  const auto out = render_template_text(tpl, {"topic", "x"}, {{"topic", "T"}, {"x", "1"}});
  CHECK(out == "Topic T; return {\"k\": 1} and {undeclared}");
}

TEST_CASE("a missing declared value raises with the placeholder name") {
  try {
    render_template_text("{a} {b}", {"a", "b"}, {{"a", "1"}});
    FAIL("expected RenderError");
  } catch (const RenderError& e) {
    CHECK(e.placeholder() == "b");
  }
}

TEST_CASE("substituted values are not re-expanded") {
  CHECK(render_template_text("{a}", {"a", "b"}, {{"a", "{b}"}, {"b", "x"}}) == "{b}");
}

TEST_CASE("shipped banks cover every stage with identical placeholders") {
  const auto banks = BankSet::load_dir(testkit::config_dir() / "prompts");
  const auto all = banks.all();
  REQUIRE(all.size() >= 2);
  for (const auto& b : all) CHECK(b.stages.size() == 23);
  const auto report = bank_parity_check(all);
  for (const auto& i : report.issues) INFO(i.bank << " " << i.key << " " << i.detail);
  CHECK(report.ok());
}

TEST_CASE("parity check flags a drifted placeholder set and a missing stage") {
  const auto banks = BankSet::load_dir(testkit::config_dir() / "prompts").all();
  auto drifted = banks[1];
  drifted.stages[8].placeholders.insert("extra");
  drifted.stages.erase(3);
  const auto report = bank_parity_check({banks[0], drifted});
  CHECK_FALSE(report.ok());
  bool saw3 = false, saw8 = false;
  for (const auto& i : report.issues) {
    saw3 = saw3 || i.key == "stage 3";
    saw8 = saw8 || i.key == "stage 8";
  }
  CHECK(saw3);
  CHECK(saw8);
}

TEST_CASE("render_prompt appends overlays in order") {
  const auto banks = BankSet::load_dir(testkit::config_dir() / "prompts");
  const auto& bank = banks.for_domain("ml");
  Vars vars;
  for (const auto& p : bank.stages.at(1).placeholders) vars[p] = "<" + p + ">";
  const auto r = render_prompt(bank, StageId::of(1), vars, {"first overlay", "second overlay"});
  const auto a = r.user.find("first overlay");
  const auto b = r.user.find("second overlay");
  REQUIRE(a != std::string::npos);
  REQUIRE(b != std::string::npos);
  CHECK(a < b);
}

TEST_CASE("scripted backend resolves by longest prefix and repeats the last entry") {
  ScriptedBackend be(Json{{"responses",
                           {{"stage08/draft", Json::array({"d1", "d2"})},
                            {"stage08", Json::array({"generic"})},
                            {"*", Json::array({"fallback"})}}}});
  auto ask = [&](const std::string& tag) { return be.complete({tag, {}}).text; };
  CHECK(ask("stage08/draft/Innovator") == "d1");
  CHECK(ask("stage08/draft/Skeptic") == "d2");
  CHECK(ask("stage08/draft/Other") == "d2");
  CHECK(ask("stage08/critique") == "generic");
  CHECK(ask("stage09") == "fallback");
  CHECK(be.requests().size() == 5);
}

TEST_CASE("scripted backend cursor survives snapshot and restore") {
  const Json fx{{"responses", {{"a", Json::array({"1", "2", "3"})}}}};
  ScriptedBackend one(fx);
  one.complete({"a", {}});
  ScriptedBackend two(fx);
  two.restore_state(one.snapshot_state());
  CHECK(two.complete({"a", {}}).text == "2");
}

TEST_CASE("scripted transport error entry") {
  ScriptedBackend be(Json{{"responses", {{"x", Json::array({Json{{"$error", "transport"}}, "ok"})}}}});
  CHECK_THROWS_AS(be.complete({"x", {}}), TransportError);
  CHECK(be.complete({"x", {}}).text == "ok");
}

TEST_CASE("parse_structured tolerates fences") {
  CHECK(parse_structured("```json\n{\"a\": 1}\n```")->at("a") == 1);
  CHECK(parse_structured("  [1, 2]\n")->size() == 2);
  CHECK_FALSE(parse_structured("42").has_value());
  CHECK_FALSE(parse_structured("no json here").has_value());
}

TEST_CASE("call_agent records the transcript and rejects malformed json") {
  ScriptedBackend be(Json{{"responses", {{"j", Json::array({"not json"})}, {"t", Json::array({"plain"})}}}});
  TranscriptLog log;
  RenderedPrompt structured;
  structured.json_mode = true;
  CHECK_THROWS_AS(call_agent(be, {"j", structured}, &log), MalformedOutput);
  CHECK(call_agent(be, {"t", {}}, &log).text == "plain");
  CHECK(log.size() == 2);
}

TEST_CASE("domain registry has eight domains plus generic") {
  const auto reg = DomainRegistry::load_dir(testkit::config_dir() / "domains");
  const auto ids = reg.ids();
  CHECK(ids.size() == 9);
  CHECK(reg.contains(kGenericDomain));
  CHECK(reg.get("nonexistent").id == kGenericDomain);
  for (const auto& id : ids) {
    const auto& p = reg.get(id);
    CHECK(p.debate_roles_hypothesis.size() >= 3);
    CHECK(p.debate_roles_analysis.size() >= 3);
    CHECK_FALSE(p.context_block().empty());
  }
}

TEST_CASE("keyword rules prefer specific phrases and need contiguous tokens") {
  const auto rules = KeywordRuleset::from_json(Json::parse(R"({"rules": [
    {"pattern": "cross", "specificity": 1, "domain": "a"},
    {"pattern": "cross section", "specificity": 2, "domain": "b"}
  ]})"));
  CHECK(rules.match("Measuring the Cross Section of X") == std::optional<std::string>("b"));
  CHECK(rules.match("cross the section") == std::optional<std::string>("a"));
  CHECK_FALSE(rules.match("crossing").has_value());
}

TEST_CASE("detection levels") {
  const auto reg = DomainRegistry::load_dir(testkit::config_dir() / "domains");
  const auto rules = KeywordRuleset::load(testkit::config_dir() / "domains" / "keywords.rules");
  const auto banks = BankSet::load_dir(testkit::config_dir() / "prompts");
  ScriptedBackend classifier(Json{{"responses", {{"classify", Json::array({R"({"domain": "econ"})"})}}}});
  DetectionInputs in{std::nullopt, &rules, &reg, &classifier, &banks.for_domain("ml"), nullptr};

  auto forced = in;
  forced.forced_override = "bio";
  CHECK(detect_domain("anything", forced).level == 0);
  CHECK(detect_domain("anything", forced).domain == "bio");

  auto kw = detect_domain("Constraining parton distribution function fits", in);
  CHECK(kw.level == 1);
  CHECK(kw.domain == "hep-ph");

  auto cls = detect_domain("zzz qqq", in);
  CHECK(cls.level == 2);
  CHECK(cls.domain == "econ");

  ScriptedBackend broken(Json{{"responses", {{"classify", Json::array({Json{{"$error", "transport"}}})}}}});
  in.classifier = &broken;
  auto fb = detect_domain("zzz qqq", in);
  CHECK(fb.level == 3);
  CHECK(fb.domain == kGenericDomain);
  CHECK_FALSE(fb.warnings.empty());
}
