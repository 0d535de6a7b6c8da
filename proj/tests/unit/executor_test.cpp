#include <doctest.h>

#include <random>

#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/error.hpp"
#include "labloop/executor/bundle.hpp"
#include "labloop/executor/codegen.hpp"
#include "labloop/executor/complexity.hpp"
#include "labloop/executor/repair.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/executor/validate.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::executor;

namespace {

CodeBundle one_file(const std::string& src) {
  CodeBundle b;
  b.entrypoint = "main.py";
  b.files["main.py"] = src;
  return b;
}

ValidationRuleset shipped_rules() { return ValidationRuleset::load(testkit::config_dir() / "sandbox" / "rules"); }

CodeBundle behaving(const Json& behavior, std::vector<std::string> conditions = {"a", "b"}) {
  CodeBundle b = one_file("from harness import report_metric\n");
  b.files["sandbox/behavior.json"] = behavior.dump();
  b.declared_conditions = std::move(conditions);
  return b;
}

Json report(const std::string& c, const std::string& m, int seed, double v) {
  return {{"op", "report"}, {"condition", c}, {"metric", m}, {"seed", seed}, {"value", v}};
}

}  // namespace

TEST_CASE("every blacklisted identifier yields exactly one finding") {
  const auto rules = shipped_rules();
  auto check_one = [&](const std::string& line, const std::string& rule) {
    const auto report = validate_code(one_file(line + "\n"), rules);
    INFO(line);
    REQUIRE(report.findings.size() == 1);
    CHECK(report.findings[0].rule == rule);
    CHECK(report.findings[0].line == 1);
    CHECK_FALSE(report.ok());
  };
  for (const auto& f : rules.forbidden_calls) check_one(f + "('x')", "forbidden_call");
  for (const auto& f : rules.banned_builtins) check_one(f + "('x')", "banned_builtin");
  for (const auto& m : rules.module_blacklist) check_one("import " + m, "module_blacklist");
}

TEST_CASE("clean code passes and non-allowlisted imports only warn") {
  const auto rules = shipped_rules();
  CHECK(validate_code(one_file("import numpy as np\nx = np.zeros(3)\n"), rules).findings.empty());
  const auto r = validate_code(one_file("import obscure_pkg\n"), rules);
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].rule == "import_not_allowlisted");
  CHECK(r.ok());
  CHECK(r.warnings() == 1);
}

TEST_CASE("identifiers inside strings and comments are ignored") {
  const auto rules = shipped_rules();
  CHECK(validate_code(one_file("s = 'eval(1) import socket'  # os.system('x')\n"), rules).findings.empty());
}

TEST_CASE("aliases and from-imports resolve to forbidden calls") {
  const auto rules = shipped_rules();
  const auto r = validate_code(one_file("import os as o\no.system('ls')\n"), rules);
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].rule == "forbidden_call");
  CHECK(r.findings[0].line == 2);
}

TEST_CASE("syntax errors are reported") {
  const auto r = validate_code(one_file("def f(:\n  return 'x\n"), shipped_rules());
  CHECK_FALSE(r.ok());
  bool syntax = false;
  for (const auto& f : r.findings) syntax = syntax || f.rule == "syntax";
  CHECK(syntax);
}

TEST_CASE("literal metric values are flagged") {
  const auto r = validate_code(one_file("from harness import report_metric\nreport_metric('a', 'acc', 0, 0.99)\n"),
                               shipped_rules());
  bool hard = false;
  for (const auto& f : r.findings) hard = hard || f.rule == "hardcoded_metric";
  CHECK(hard);
}

TEST_CASE("lexer tracks logical lines") {
  const auto lx = lex_python("x = (1,\n 2)\ny = 3\n");
  CHECK(lx.errors.empty());
  int newlines = 0;
  for (const auto& t : lx.tokens) newlines += t.kind == PyToken::Newline;
  CHECK(newlines == 2);
}

TEST_CASE("complexity mean and routing threshold") {
  CHECK(complexity_mean({0.2, 0.4, 0.6, 0.8, 1.0, 0.6}) == 0.6);
  ComplexityScore at;
  at.c = 0.6;
  CHECK(select_generator(at) == GeneratorTier::BuiltinMultiphase);
  at.c = 0.6000001;
  CHECK(select_generator(at) == GeneratorTier::ExternalCoder);
  CHECK(tier_cascade(GeneratorTier::ExternalCoder).size() == 3);
  CHECK(tier_cascade(GeneratorTier::BuiltinMultiphase) ==
        std::vector<GeneratorTier>{GeneratorTier::BuiltinMultiphase, GeneratorTier::LegacySingleShot});
}

TEST_CASE("complexity normalizes raw counts by caps") {
  const ComplexityCaps caps;
  const Json plan{{"architectural_depth", 10},
                  {"file_count", 6},
                  {"domain_difficulty", "high"},
                  {"dependency_chains", 3},
                  {"control_flow_complexity", 5}};
  const auto s = score_complexity(plan, caps, 0.5);
  CHECK(s.dimensions[0] == 1.0);
  CHECK(s.dimensions[1] == doctest::Approx(0.5));
  CHECK(s.dimensions[3] == doctest::Approx(0.5));
  CHECK(s.dimensions[4] == doctest::Approx(0.5));
  CHECK(s.dimensions[5] == doctest::Approx(0.5));
  double sum = 0;
  for (double d : s.dimensions) sum += d;
  CHECK(s.c == doctest::Approx(sum / 6));
  CHECK_THROWS_AS(score_complexity(Json::array(), caps), StageFailure);
}

TEST_CASE("network policy matrix") {
  CHECK_FALSE(network_allowed(NetworkPolicy::None, ExecPhase::Install));
  CHECK(network_allowed(NetworkPolicy::PipOnly, ExecPhase::Install));
  CHECK_FALSE(network_allowed(NetworkPolicy::PipOnly, ExecPhase::Data));
  CHECK(network_allowed(NetworkPolicy::SetupOnly, ExecPhase::Data));
  CHECK_FALSE(network_allowed(NetworkPolicy::SetupOnly, ExecPhase::Execute));
  CHECK(network_allowed(NetworkPolicy::Full, ExecPhase::Execute));
  CHECK_THROWS_AS(network_policy_from_string("open"), ConfigError);
}

TEST_CASE("phase-2 network access fails under setup_only") {
  FakeRuntime rt;
  const auto b = behaving({{"data", Json::array({Json{{"op", "fetch"}, {"url", "https://data.example/x"}}})},
                           {"execute", Json::array({Json{{"op", "fetch"}, {"url", "https://evil.example/y"}}})}});
  const auto res = rt.execute(b, NetworkPolicy::SetupOnly, {}, {});
  CHECK_FALSE(res.ok);
  REQUIRE(res.failure);
  CHECK(res.failure->phase == ExecPhase::Execute);
  CHECK(res.failure->category == "network-error");
  CHECK(rt.network_log() == std::vector<std::string>{"https://data.example/x"});
}

TEST_CASE("the harness is the only source of metrics") {
  testkit::TempDir dir;
  FakeRuntime rt;
  const auto b = behaving({{"execute", Json::array({
                                           Json{{"op", "stdout"}, {"text", "accuracy: 0.999"}},
                                           Json{{"op", "write"}, {"path", "results/metrics.json"},
                                                {"content", R"({"records":[{"condition":"a","metric":"acc","seed":0,"value":0.999}]})"}},
                                           report("a", "acc", 0, 0.5),
                                           report("b", "acc", 0, 0.6),
                                       })}});
  const auto res = rt.execute(b, NetworkPolicy::SetupOnly, {}, dir.path());
  REQUIRE(res.ok);
  REQUIRE(res.metrics["records"].size() == 2);
  for (const auto& r : res.metrics["records"]) CHECK(r["value"].get<double>() != 0.999);
  CHECK(Json::parse(read_file(dir / "harness_out/results/metrics.json")) == res.metrics);
}

TEST_CASE("harness refuses reports outside phase 2 and undeclared conditions") {
  FakeRuntime rt;
  auto early = rt.execute(behaving({{"data", Json::array({report("a", "acc", 0, 1)})}}), NetworkPolicy::SetupOnly, {}, {});
  CHECK_FALSE(early.ok);
  auto stranger = rt.execute(behaving({{"execute", Json::array({report("z", "acc", 0, 1)})}}), NetworkPolicy::SetupOnly, {}, {});
  CHECK_FALSE(stranger.ok);
}

TEST_CASE("harness enforces breadth-first repetitions") {
  Harness h({"a", "b"});
  h.report("a", "acc", 0, 0.1);
  CHECK_THROWS_AS(h.report("a", "acc", 1, 0.2), InvariantViolation);
  h.report("b", "acc", 0, 0.3);
  CHECK_NOTHROW(h.report("a", "acc", 1, 0.2));
  CHECK_THROWS_AS(h.report("c", "acc", 0, 0.3), InvariantViolation);
}

TEST_CASE("virtual wall clock limit") {
  FakeRuntime rt;
  ResourceLimits lim;
  lim.wall_clock_s = 10;
  const auto res = rt.execute(behaving({{"execute", Json::array({Json{{"op", "sleep"}, {"seconds", 11}}})}}),
                              NetworkPolicy::SetupOnly, lim, {});
  REQUIRE(res.failure);
  CHECK(res.failure->category == "timeout");
}

TEST_CASE("docker commands isolate phase 2") {
  struct Recorder : CommandRunner {
    std::vector<std::vector<std::string>> calls;
    CommandResult run(const std::vector<std::string>& argv, int) override {
      calls.push_back(argv);
      return {0, ""};
    }
  } rec;
  DockerRuntime rt(rec, "/opt/h.py");
  const auto cmd = rt.phase_command(ExecPhase::Execute, NetworkPolicy::None, {}, "/w", one_file("x=1\n"));
  const std::string joined = text::join(cmd, " ");
  CHECK(joined.find("--network none") != std::string::npos);
  CHECK(joined.find("/opt/h.py:/opt/harness/harness.py:ro") != std::string::npos);
  CHECK(joined.find("--rm") != std::string::npos);
  const auto fw = text::join(rt.phase_command(ExecPhase::Execute, NetworkPolicy::SetupOnly, {}, "/w", one_file("x=1\n")), " ");
  CHECK(fw.find("iptables") != std::string::npos);
}

TEST_CASE("failure signatures ignore volatile details") {
  const auto a = make_signature(ExecPhase::Execute, "runtime-error", "Error at 0x7ffe12 line 12");
  const auto b = make_signature(ExecPhase::Execute, "runtime-error", "error  at 0x1234ab line 99");
  CHECK(a.fingerprint == b.fingerprint);
  CHECK(classify_failure("ModuleNotFoundError: No module named 'x'") == "import-error");
  CHECK(classify_failure("ZeroDivisionError: division by zero") == "runtime-error");
}

TEST_CASE("repair budget charges double for a repeated fingerprint") {
  const auto banks = agents::BankSet::load_dir(testkit::config_dir() / "prompts");
  const auto rules = shipped_rules();
  agents::ScriptedBackend be(Json{{"responses", {{"stage13/repair", Json::array({R"({"files": {"main.py": "x = 2\n"}})"})}}}});
  RepairContext ctx{&banks.for_domain("ml"), &be, nullptr, &rules, {}};
  const auto sig = make_signature(ExecPhase::Execute, "runtime-error", "boom in main.py");
  RepairBudget budget;
  auto first = repair(sig, one_file("x = 1\n"), budget, ctx);
  CHECK(first.cost == 1);
  CHECK_FALSE(first.repeated);
  REQUIRE(first.patched);
  CHECK(first.patched->files.at("main.py") == "x = 2\n");
  CHECK(budget.remaining == 2);
  auto second = repair(sig, one_file("x = 1\n"), budget, ctx);
  CHECK(second.repeated);
  CHECK(second.cost == 2);
  CHECK(budget.remaining == 0);
  auto third = repair(sig, one_file("x = 1\n"), budget, ctx);
  CHECK(third.exhausted);
  CHECK(be.requests().size() == 2);
}

TEST_CASE("apply_patch merges files") {
  auto b = one_file("a\n");
  b.files["util.py"] = "u\n";
  const auto p = apply_patch(b, Json{{"files", {{"main.py", "b\n"}}}});
  CHECK(p.files.at("main.py") == "b\n");
  CHECK(p.files.at("util.py") == "u\n");
}

TEST_CASE("degenerate metrics") {
  CHECK(degenerate_metrics_check({{"a", {{"acc", 0.0}}}, {"b", {{"acc", 0.0}}}, {"c", {{"acc", 0.0}}}}, "acc") ==
        DegenerateVerdict::Degenerate);
  CHECK(degenerate_metrics_check({{"a", {{"acc", 0.5}}}, {"b", {{"acc", 0.7}}}}, "acc") == DegenerateVerdict::NotDegenerate);
  CHECK(degenerate_metrics_check({{"a", {{"acc", 0.5}}}}, "acc") == DegenerateVerdict::NotApplicable);
  const Json doc{{"records", Json::array({report("a", "acc", 0, 0.2), report("a", "acc", 1, 0.4)})}};
  CHECK(condition_means(doc)["a"]["acc"] == doctest::Approx(0.3));
}

TEST_CASE("bundle invariants") {
  CodeBundle b = one_file("x\n");
  CHECK(b.invariant_problems().empty());
  b.blueprint.push_back({"model.py", "model", {}});
  CHECK_FALSE(b.invariant_problems().empty());
  b.entrypoint = "missing.py";
  CHECK(b.invariant_problems().size() == 2);
  CHECK(CodeBundle::from_json(b.to_json()).files == b.files);
}

TEST_CASE("codegen falls through the cascade") {
  const auto banks = agents::BankSet::load_dir(testkit::config_dir() / "prompts");
  agents::ScriptedBackend external(Json{{"responses", {{"*", Json::array({Json{{"$error", "transport"}}})}}}},
                                   "ext", agents::BackendKind::ExternalCoder);
  agents::ScriptedBackend builtin(
      Json{{"responses", {{"*", Json::array({R"({"files": {"main.py": "print(1)\n"}, "entrypoint": "main.py"})"})}}}});
  CodegenContext ctx{&banks.for_domain("ml"), &external, &builtin, nullptr, {{"topic", "t"}, {"domain_context", "d"}, {"context", "{}"}}, {}};
  ComplexityScore s;
  s.c = 0.9;
  const auto r = generate_code(s, {"a", "b"}, ctx);
  CHECK(r.attempts.front().tier == GeneratorTier::ExternalCoder);
  CHECK_FALSE(r.attempts.front().ok);
  REQUIRE(r.attempts.size() == 3);
  CHECK_FALSE(r.attempts[1].ok);  // the plan names no files
  CHECK(r.tier == GeneratorTier::LegacySingleShot);
  CHECK(r.bundle.invariant_problems().empty());
}
