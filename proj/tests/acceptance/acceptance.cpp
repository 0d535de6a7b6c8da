// One PASS/FAIL line per primary acceptance criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "labloop/core/stage.hpp"
#include "labloop/core/transitions.hpp"
#include "labloop/evolution/lessons.hpp"
#include "labloop/executor/repair.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/executor/validate.hpp"
#include "labloop/hitl/modes.hpp"
#include "labloop/judge/judge.hpp"
#include "labloop/net/transport.hpp"
#include "labloop/verify/citations.hpp"
#include "labloop/verify/claims.hpp"
#include "labloop/verify/registry.hpp"
#include "labloop/verify/tables.hpp"
#include "testkit.hpp"

using namespace labloop;

namespace {

struct Failed {
  std::string why;
};

void expect(bool ok, const std::string& why) {
  if (!ok) throw Failed{why};
}

int failures = 0;

void criterion(const std::string& name, const std::function<void()>& body) {
  try {
    body();
    std::cout << "PASS  " << name << "\n";
  } catch (const Failed& f) {
    ++failures;
    std::cout << "FAIL  " << name << ": " << f.why << "\n";
  } catch (const std::exception& e) {
    ++failures;
    std::cout << "FAIL  " << name << ": exception: " << e.what() << "\n";
  }
}

const std::set<std::string> kVolatile{"config.json"};

std::map<std::string, std::string> golden_tree(const testkit::TempDir& dir, std::chrono::duration<double>* elapsed,
                                               RunState* out) {
  const auto cfg = testkit::golden_config(dir.path());
  testkit::Rig rig(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = rig.orchestrator.start(cfg);
  if (elapsed) *elapsed = std::chrono::steady_clock::now() - t0;
  if (out) *out = s;
  return testkit::snapshot_tree(dir / "runs", kVolatile);
}

std::string first_difference(const std::map<std::string, std::string>& a, const std::map<std::string, std::string>& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) return "missing " + k;
    if (it->second != v) return "differs " + k;
  }
  for (const auto& [k, _] : b) {
    if (!a.count(k)) return "extra " + k;
  }
  return "";
}

Json decision(DecisionKind k) { return {{"decision", to_string(k)}, {"justification", "x"}, {"evidence_refs", Json::array()}}; }

// Registry with the given condition -> metric -> seed values.
verify::VerifiedRegistry registry_of(const std::map<std::string, std::map<std::string, std::vector<double>>>& data) {
  Json recs = Json::array();
  for (const auto& [c, metrics] : data) {
    for (const auto& [m, vals] : metrics) {
      for (std::size_t i = 0; i < vals.size(); ++i) {
        recs.push_back({{"condition", c}, {"metric", m}, {"seed", static_cast<int>(i)}, {"value", vals[i]}});
      }
    }
  }
  return verify::VerifiedRegistry::build({{"exec-acc", {{"records", recs}}}});
}

}  // namespace

int main() {
  const auto& svc = testkit::services();

  criterion("golden run: 23 stages under 10 s, verified paper, byte-identical repeat", [&] {
    testkit::TempDir a, b;
    std::chrono::duration<double> ta{}, tb{};
    RunState sa;
    const auto tree_a = golden_tree(a, &ta, &sa);
    const auto tree_b = golden_tree(b, &tb, nullptr);
    expect(sa.status == RunStatus::Completed, "status " + to_string(sa.status));
    expect(sa.artifacts.size() == 23, "stages " + std::to_string(sa.artifacts.size()));
    expect(ta.count() < 10.0 && tb.count() < 10.0, "too slow");
    const auto run = a / "runs/golden";
    const auto reg = verify::VerifiedRegistry::from_json(Json::parse(read_file(run / "registry.json")));
    const auto v = verify::verify_document(Json::parse(read_file(run / "paper/manuscript.json")), reg, svc.claims);
    expect(v.accepted, "paper rejected");
    expect(!v.verdicts.empty(), "no numeric claims checked");
    const auto diff = first_difference(tree_a, tree_b);
    expect(diff.empty(), diff);
  });

  criterion("decision budget: 10000 random streams within N_p*(N_r+1) visits", [&] {
    std::mt19937_64 rng(20260115);
    for (int trial = 0; trial < 10000; ++trial) {
      RunState s;
      s.budget.max_pivots = 1 + static_cast<int>(rng() % 4);
      s.budget.max_refines = static_cast<int>(rng() % 11);
      s.current_stage = stages::kExperimentRun;
      const int bound = s.budget.max_pivots * (s.budget.max_refines + 1);
      while (s.current_stage != stages::kPaperOutline) {
        if (s.current_stage != stages::kResearchDecision) {
          s = labloop::advance(s, Json::object());
          continue;
        }
        const auto want = static_cast<DecisionKind>(rng() % 3);
        const RunState before = s;
        s = labloop::advance(s, decision(want));
        const bool refine_left = before.budget.refines_used < before.budget.max_refines;
        const bool pivot_left = before.budget.pivots_used + 1 < before.budget.max_pivots;
        if (want == DecisionKind::Pivot && pivot_left) {
          expect(s.budget.refines_used == 0, "pivot kept n_r");
          expect(s.current_stage == stages::kHypothesisGen, "pivot target");
        } else if (want == DecisionKind::Refine && refine_left) {
          expect(s.current_stage == stages::kExperimentRun, "refine target");
        } else {
          expect(s.current_stage == stages::kPaperOutline, "exhaustion did not force Proceed");
        }
        expect(s.stage15_visits <= bound, "visit bound exceeded");
      }
    }
  });

  criterion("lesson decay: halves per half-life; monotone over 10000 pairs", [&] {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> sev(1e-6, 1.0), days(0.0, 1000.0), half(0.5, 365.0);
    for (int i = 0; i < 1000; ++i) {
      const double s = sev(rng), t = half(rng);
      for (int k = 0; k <= 3; ++k) {
        const double want = s * std::ldexp(1.0, -k);
        expect(std::abs(evolution::weight(s, k * t, t) - want) <= 1e-9, "decay point off");
      }
    }
    for (int i = 0; i < 10000; ++i) {
      const double s = sev(rng), t = half(rng), d1 = days(rng), d2 = days(rng);
      const double w1 = evolution::weight(s, std::min(d1, d2), t);
      const double w2 = evolution::weight(s, std::max(d1, d2), t);
      expect(w1 >= w2, "not monotone in elapsed time");
      expect(w1 <= s && w2 >= 0.0, "out of range");
      const double s2 = sev(rng);
      const double ws = evolution::weight(s, d1, t), ws2 = evolution::weight(s2, d1, t);
      expect(s <= s2 ? ws <= ws2 : ws >= ws2, "not monotone in severity");
    }
  });

  criterion("mode table: gated stages for all 7 modes", [&] {
    using hitl::InterventionMode;
    std::set<int> all;
    for (int i = 1; i <= 23; ++i) all.insert(i);
    const auto pb = phase_boundary_stages();
    const std::set<int> boundaries(pb.begin(), pb.end());
    expect(boundaries == std::set<int>{2, 6, 8, 11, 13, 15, 19, 23}, "phase boundaries");
    const std::map<InterventionMode, std::set<int>> want{
        {InterventionMode::FullAuto, {}},
        {InterventionMode::GateOnly, {5, 9, 20}},
        {InterventionMode::CoPilot, {5, 8, 9, 14, 17, 20}},
        {InterventionMode::Thorough, boundaries},
        {InterventionMode::StepByStep, all},
        {InterventionMode::PreExperiment, {5, 8, 9}},
        {InterventionMode::PostExperiment, {14, 17, 20}},
    };
    expect(hitl::all_modes().size() == want.size(), "mode count");
    for (const auto& [m, stages] : want) {
      expect(hitl::stages_for_mode(m, svc.settings.thorough_stages) == stages, "mode " + hitl::to_string(m));
      expect(hitl::mode_spec(m).smartpause == (m == InterventionMode::CoPilot), "smartpause " + hitl::to_string(m));
    }
  });

  criterion("judge: T01 all-ones exact, brute-force oracle on 1000 rubrics, timeout rule", [&] {
    const auto t01 = judge::Rubric::load(testkit::source_dir() / "rubrics/T01.json");
    judge::Review ones;
    for (const auto& l : t01.leaves) ones.push_back({l.id, 1.0, ""});
    const auto s = judge::aggregate(t01, ones);
    expect(s.overall_strict == 1.0 && s.results_only == 1.0, "all-ones not exactly 1");

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
      judge::Rubric r;
      r.topic_id = "R" + std::to_string(trial);
      const std::pair<judge::Category, double> cats[] = {
          {judge::Category::CD, 25}, {judge::Category::CE, 25}, {judge::Category::RA, 50}};
      for (const auto& [cat, total] : cats) {
        const int n = 1 + static_cast<int>(rng() % 5);
        std::vector<double> cuts{0.0, total};
        for (int i = 1; i < n; ++i) cuts.push_back(std::round(u(rng) * total * 100) / 100);
        std::sort(cuts.begin(), cuts.end());
        for (int i = 0; i < n; ++i) {
          r.leaves.push_back({judge::to_string(cat) + std::to_string(i), cat, cuts[i + 1] - cuts[i], ""});
        }
      }
      r.check();
      judge::Review rv;
      for (const auto& l : r.leaves) rv.push_back({l.id, std::round(u(rng) * 1000) / 1000, ""});
      long double num = 0, den = 0, rnum = 0, rden = 0;
      for (std::size_t i = 0; i < r.leaves.size(); ++i) {
        num += static_cast<long double>(r.leaves[i].weight) * rv[i].score;
        den += r.leaves[i].weight;
        if (r.leaves[i].category != judge::Category::CD) {
          rnum += static_cast<long double>(r.leaves[i].weight) * rv[i].score;
          rden += r.leaves[i].weight;
        }
      }
      const auto got = judge::aggregate(r, rv);
      expect(std::abs(got.overall_strict - static_cast<double>(num / den)) <= 1e-12, "overall disagrees");
      expect(std::abs(got.results_only - static_cast<double>(rnum / rden)) <= 1e-12, "results_only disagrees");
    }

    judge::Review high;
    for (const auto& l : t01.leaves) high.push_back({l.id, 0.9, ""});
    for (const auto& ls : judge::apply_timeout_rule(t01, high, true, false)) {
      const auto cat = t01.leaf(ls.leaf_id).category;
      if (cat == judge::Category::CE) expect(ls.score == 0.0, "CE not zeroed");
      if (cat == judge::Category::RA) expect(ls.score == 0.1, "RA not capped at 0.1");
    }
  });

  criterion("verification gate: reject by name, placeholder outside strict sections, table round-trip", [&] {
    const auto reg = registry_of({{"baseline", {{"accuracy", {0.806, 0.812, 0.818}}}},
                                  {"smoothed", {{"accuracy", {0.851, 0.853, 0.855}}}}});
    const std::string sentence = "The smoothed model reaches 0.913 accuracy.";
    const Json strict{{"sections", Json::array({Json{{"name", "Results"}, {"text", sentence}},
                                                Json{{"name", "Discussion"}, {"text", "No numbers."}}})}};
    const auto r1 = verify::verify_document(strict, reg, svc.claims);
    expect(!r1.accepted, "fabricated value accepted");
    expect(r1.rejected_values == std::vector<std::string>{"0.913"}, "rejection does not name 0.913");

    const Json moved{{"sections", Json::array({Json{{"name", "Results"}, {"text", "No numbers."}},
                                               Json{{"name", "Discussion"}, {"text", sentence}}})}};
    const auto r2 = verify::verify_document(moved, reg, svc.claims);
    expect(r2.accepted, "non-strict value rejected");
    expect(r2.manuscript["sections"][1]["text"] == "The smoothed model reaches " + svc.claims.placeholder + " accuracy.",
           "no placeholder substitution");

    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> val(-5.0, 100.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::map<std::string, std::map<std::string, std::vector<double>>> data;
      const int nc = 1 + static_cast<int>(rng() % 5), nm = 1 + static_cast<int>(rng() % 4);
      const int seeds = 1 + static_cast<int>(rng() % 5);
      verify::TableSpec spec;
      spec.id = "t" + std::to_string(trial);
      spec.caption = "Random table";
      spec.precision = static_cast<int>(rng() % 5);
      spec.with_std = rng() % 2;
      for (int c = 0; c < nc; ++c) spec.conditions.push_back("cond_" + std::string(1, static_cast<char>('a' + c)));
      for (int m = 0; m < nm; ++m) spec.metrics.push_back("metric_" + std::string(1, static_cast<char>('p' + m)));
      for (const auto& c : spec.conditions) {
        for (const auto& m : spec.metrics) {
          for (int s = 0; s < seeds; ++s) data[c][m].push_back(val(rng));
        }
      }
      const auto treg = registry_of(data);
      const auto table = verify::render_verified_table(treg, spec);
      const Json doc{{"sections", Json::array({Json{{"name", "Results"}, {"text", table}}})}};
      const auto v = verify::verify_document(doc, treg, svc.claims);
      expect(v.accepted, "rendered table " + spec.id + " failed re-verification");
    }
  });

  criterion("citation cascade: calls follow the layer order; all-miss is hallucinated and removed", [&] {
    const verify::ResolverEndpoints ep;
    auto layer_of = [&](const std::string& url) {
      if (url.rfind(ep.crossref, 0) == 0) return std::string("doi");
      if (url.rfind(ep.openalex, 0) == 0) return std::string("title_fuzzy");
      if (url.rfind(ep.arxiv, 0) == 0) return std::string("arxiv");
      if (url.rfind(ep.semantic_scholar, 0) == 0) return std::string("fallback_api");
      return std::string("?");
    };
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      verify::CitationRecord rec;
      rec.key = "k" + std::to_string(trial);
      rec.title = "A study of thing " + std::to_string(trial);
      rec.doi = "10.1000/" + std::to_string(trial);
      rec.arxiv_id = "2101." + std::to_string(10000 + trial);
      net::FixtureTransport t;
      const int hit = static_cast<int>(rng() % 5);  // 4 means no layer answers
      const std::string q = net::url_encode(rec.title);
      if (hit == 0) t.add("GET", ep.crossref + "/works/" + net::url_encode(rec.doi), 200, R"({"message": {}})");
      if (hit == 1) t.add("GET", ep.openalex + "/works?search=" + q + "&per-page=5", 200,
                          Json{{"results", Json::array({Json{{"display_name", rec.title}}})}}.dump());
      if (hit == 2) t.add("GET", ep.arxiv + "/api/query?id_list=" + net::url_encode(rec.arxiv_id), 200,
                          "<feed><entry><title>" + rec.title + "</title></entry></feed>");
      if (hit == 3) t.add("GET", ep.semantic_scholar + "/graph/v1/paper/search?query=" + q + "&limit=5&fields=title,year,externalIds",
                          200, Json{{"data", Json::array({Json{{"title", rec.title}}})}}.dump());
      const auto out = verify::verify_citation(rec, t, ep);
      const auto calls = t.calls();
      const std::size_t want_calls = hit == 4 ? 4 : hit + 1;
      expect(calls.size() == want_calls, "wrong number of resolver calls");
      for (std::size_t i = 0; i < calls.size(); ++i) {
        expect(layer_of(calls[i].url) == verify::kLayerOrder[i], "call order is not a prefix of the layer order");
      }
      expect((hit == 4) == (out.classification == verify::Classification::Hallucinated), "classification");
    }

    // The golden run's unresolvable reference.
    testkit::TempDir dir;
    RunState s;
    golden_tree(dir, nullptr, &s);
    const auto run = dir / "runs/golden";
    const Json cites = Json::parse(read_file(run / "paper/citations.json"));
    bool found = false;
    for (const auto& r : cites["records"]) {
      if (r["key"] == "chen2023") {
        found = true;
        expect(r["classification"] == "Hallucinated", "chen2023 not hallucinated");
        expect(r["trace"].size() == 4, "chen2023 did not try every layer");
      } else {
        expect(r["classification"] == "Verified", r["key"].get<std::string>() + " not verified");
      }
    }
    expect(found, "chen2023 missing from the citation report");
    expect(cites["removed"] == Json::array({"chen2023"}), "removed list");
    expect(read_file(run / "paper/references.bib").find("chen2023") == std::string::npos, "chen2023 still in references.bib");
    expect(read_file(run / "paper/main.tex").find("chen2023") == std::string::npos, "chen2023 still cited in main.tex");
  });

  criterion("sandbox: phase-2 network fails, harness is the sole metrics source, one finding per identifier", [&] {
    executor::CodeBundle b;
    b.entrypoint = "main.py";
    b.files["main.py"] = "from harness import report_metric\n";
    b.declared_conditions = {"a", "b"};
    for (auto policy : {executor::NetworkPolicy::None, executor::NetworkPolicy::PipOnly, executor::NetworkPolicy::SetupOnly}) {
      b.files["sandbox/behavior.json"] =
          Json{{"execute", Json::array({Json{{"op", "fetch"}, {"url", "https://example.org/x"}}})}}.dump();
      executor::FakeRuntime rt;
      const auto r = rt.execute(b, policy, {}, {});
      expect(!r.ok && r.failure && r.failure->phase == executor::ExecPhase::Execute &&
                 r.failure->category == "network-error",
             "phase-2 fetch allowed under " + executor::to_string(policy));
      expect(rt.network_log().empty(), "phase-2 fetch reached the network");
    }

    testkit::TempDir dir;
    b.files["sandbox/behavior.json"] =
        Json{{"execute",
              Json::array({Json{{"op", "stdout"}, {"text", "{\"records\": [{\"condition\": \"a\", \"value\": 9}]}"}},
                           Json{{"op", "write"}, {"path", "results/metrics.json"}, {"content", "{\"records\": []}"}},
                           Json{{"op", "report"}, {"condition", "a"}, {"metric", "acc"}, {"seed", 0}, {"value", 0.5}},
                           Json{{"op", "report"}, {"condition", "b"}, {"metric", "acc"}, {"seed", 0}, {"value", 0.7}}})}}
            .dump();
    executor::FakeRuntime rt;
    const auto r = rt.execute(b, executor::NetworkPolicy::SetupOnly, {}, dir.path());
    expect(r.ok, "clean run failed");
    const auto means = executor::condition_means(r.metrics);
    expect(r.metrics["records"].size() == 2 && means.at("a").at("acc") == 0.5 && means.at("b").at("acc") == 0.7,
           "metrics do not come from the harness");

    const auto rules = executor::ValidationRuleset::load(testkit::config_dir() / "sandbox/rules");
    auto one = [&](const std::string& line, const std::string& rule) {
      executor::CodeBundle c;
      c.entrypoint = "main.py";
      c.files["main.py"] = line + "\n";
      const auto rep = executor::validate_code(c, rules);
      expect(rep.findings.size() == 1 && rep.findings[0].rule == rule,
             "'" + line + "' gave " + std::to_string(rep.findings.size()) + " findings");
    };
    std::size_t n = 0;
    for (const auto& f : rules.forbidden_calls) one(f + "('x')", "forbidden_call"), ++n;
    for (const auto& f : rules.banned_builtins) one(f + "('x')", "banned_builtin"), ++n;
    for (const auto& m : rules.module_blacklist) one("import " + m, "module_blacklist"), ++n;
    expect(n >= 17, "blacklist smaller than expected");
  });

  criterion("resume after stages 3, 9, 14, 17 is byte-identical to the uninterrupted run", [&] {
    testkit::TempDir ref;
    const auto want = golden_tree(ref, nullptr, nullptr);
    for (int k : {3, 9, 14, 17}) {
      testkit::TempDir dir;
      const auto cfg = testkit::golden_config(dir.path());
      {
        testkit::Rig rig(cfg);
        pipeline::RunOptions opts;
        opts.stop_after_stage = k;
        const auto s = rig.orchestrator.start(cfg, opts);
        expect(s.status == RunStatus::Running && s.artifacts.count(k), "did not stop at " + std::to_string(k));
      }
      testkit::Rig rig(cfg);
      expect(rig.orchestrator.resume("golden").status == RunStatus::Completed, "resume did not complete");
      const auto diff = first_difference(want, testkit::snapshot_tree(dir / "runs", kVolatile));
      expect(diff.empty(), "k=" + std::to_string(k) + ": " + diff);
    }
  });

  criterion("degenerate metrics: all-zero fixture flagged, distinct conditions not", [&] {
    auto run = [](const std::vector<std::pair<std::string, double>>& values) {
      executor::CodeBundle b;
      b.entrypoint = "main.py";
      b.files["main.py"] = "from harness import report_metric\n";
      Json ops = Json::array();
      for (int seed = 0; seed < 3; ++seed) {
        for (const auto& [c, v] : values) {
          ops.push_back({{"op", "report"}, {"condition", c}, {"metric", "accuracy"}, {"seed", seed}, {"value", v}});
        }
      }
      for (const auto& [c, _] : values) b.declared_conditions.push_back(c);
      b.files["sandbox/behavior.json"] = Json{{"execute", ops}}.dump();
      executor::FakeRuntime rt;
      const auto r = rt.execute(b, executor::NetworkPolicy::SetupOnly, {}, {});
      return executor::degenerate_metrics_check(executor::condition_means(r.metrics), "accuracy");
    };
    expect(run({{"baseline", 0.0}, {"ablation", 0.0}, {"proposed", 0.0}}) == executor::DegenerateVerdict::Degenerate,
           "all-zero not flagged");
    expect(run({{"baseline", 0.61}, {"proposed", 0.74}}) == executor::DegenerateVerdict::NotDegenerate,
           "distinct conditions flagged");
  });

  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << "\n";
  return failures;
}
