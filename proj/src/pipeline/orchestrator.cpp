#include "labloop/pipeline/orchestrator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <thread>

#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"
#include "labloop/core/transitions.hpp"
#include "labloop/debate/panel.hpp"
#include "labloop/evolution/lessons.hpp"
#include "labloop/executor/codegen.hpp"
#include "labloop/executor/repair.hpp"
#include "labloop/hitl/modes.hpp"
#include "labloop/pipeline/export.hpp"
#include "labloop/verify/registry.hpp"
#include "labloop/verify/tables.hpp"

namespace labloop::pipeline {

namespace {

constexpr const char* kTableMarker = "[[VERIFIED_TABLE]]";

std::string stage_tag(int stage) { return fmt::format("stage{:02d}", stage); }

std::string error_namespace(const Services& svc, int stage) {
  return svc.contracts.get(StageId::of(stage)).error_namespace;
}

std::string failure_codes(const ValidationReport& r) {
  std::vector<std::string> parts;
  for (const auto& f : r.failures) parts.push_back(f.code + " (" + f.field + ": " + f.message + ")");
  return text::join(parts, "; ");
}

const Json& artifact(const RunState& s, int stage) {
  auto it = s.artifacts.find(stage);
  if (it == s.artifacts.end()) {
    throw StageFailure(fmt::format("stage {} output is missing", stage), "E-RUN-MISSING_INPUT");
  }
  return it->second;
}

std::vector<std::string> condition_names(const Json& conditions) {
  std::vector<std::string> out;
  for (const auto& c : conditions) out.push_back(c.is_string() ? c.get<std::string>() : c.value("name", c.dump()));
  return out;
}

/// Bibliography records from the screened literature, keyed for \cite.
Json bibliography_from(const RunState& s) {
  Json bib = Json::array();
  auto it = s.artifacts.find(stages::kLiteratureScreen);
  if (it == s.artifacts.end()) return bib;
  int n = 0;
  for (const auto& c : it->second.value("shortlisted", Json::array())) {
    if (!c.is_object()) continue;
    Json rec = c;
    ++n;
    if (!rec.contains("key")) rec["key"] = fmt::format("ref{}", n);
    bib.push_back(rec);
  }
  return bib;
}

/// Accepts either {"manuscript": {...}} or the manuscript itself.
Json manuscript_of(const Json& doc) {
  if (doc.is_object() && doc.contains("manuscript") && doc["manuscript"].is_object()) return doc["manuscript"];
  return doc;
}

Json fill_tables(Json manuscript, const std::string& tables) {
  for (auto& sec : manuscript["sections"]) {
    if (!sec.is_object()) continue;
    sec["text"] = text::replace_all(sec.value("text", ""), kTableMarker, tables);
  }
  return manuscript;
}

}  // namespace

Orchestrator::Orchestrator(const Services& services, Deps deps, RunStore& store, hitl::GateService& gates,
                           hitl::EventLog& events)
    : svc_(services), deps_(deps), store_(store), gates_(gates), events_(events) {
  if (!deps_.backend || !deps_.citations || !deps_.runtime || !deps_.clock) {
    throw ConfigError("orchestrator needs a backend, a citation transport, a runtime and a clock");
  }
}

std::string Orchestrator::now() { return format_iso8601(deps_.clock->now()); }

int exit_code_for(const RunState& s) {
  switch (s.status) {
    case RunStatus::Completed: return 0;
    case RunStatus::AwaitingGate: return 5;
    case RunStatus::Failed: {
      const std::string code = s.failure.is_object() ? s.failure.value("code", "") : "";
      return code.find("UNVERIFIED") != std::string::npos ? 6 : 4;
    }
    case RunStatus::Running: return 0;
  }
  return 4;
}

// ---------------------------------------------------------------------------
// Stage execution

namespace {

class StageRunner {
 public:
  StageRunner(const Services& svc, const Deps& deps, const RunStore& store, agents::TranscriptLog* transcript,
              const RunConfig& cfg, RunState& s)
      : svc_(svc),
        deps_(deps),
        store_(store),
        transcript_(transcript),
        cfg_(cfg),
        s_(s),
        bank_(svc.banks.for_domain(s.domain)),
        profile_(svc.domains.get(s.domain)) {}

  StageResult run(int stage) {
    switch (stage) {
      case 1: return topic_init();
      case stages::kHypothesisGen: return hypothesis_gen();
      case stages::kCodeGeneration: return code_generation();
      case stages::kExperimentRun: return experiment_run();
      case stages::kIterativeRefine: return iterative_refine();
      case stages::kResultAnalysis: return result_analysis();
      case stages::kPaperDraft: return paper_draft();
      case stages::kPaperRevision: return paper_revision();
      case stages::kKnowledgeArchive: return knowledge_archive();
      case stages::kExportPublish: return export_publish();
      case stages::kCitationVerify: return citation_verify();
      default: return generic(stage);
    }
  }

 private:
  agents::Vars base_vars(int stage) const {
    Json inputs = Json::object();
    for (const auto& f : svc_.contracts.get(StageId::of(stage)).input_schema) {
      if (!f.source_stage) continue;
      auto it = s_.artifacts.find(*f.source_stage);
      inputs[f.name] = it == s_.artifacts.end() ? Json(nullptr) : it->second;
    }
    return {{"topic", s_.topic}, {"domain_context", profile_.context_block()}, {"context", inputs.dump(2)}};
  }

  std::vector<std::string> overlays(int stage) {
    std::vector<std::string> out;
    try {
      evolution::LessonStore lessons(store_.state_dir() / "lessons.journal");
      const evolution::DecayParams p{svc_.settings.half_life_days, deps_.clock->now()};
      const std::string o = evolution::overlay_for_stage(lessons, svc_.settings.overlays, stage, p);
      if (!o.empty()) out.push_back(o);
    } catch (const Error& e) {
      s_.warnings.push_back(fmt::format("stage {}: lesson overlay skipped: {}", stage, e.what()));
    }
    if (auto it = s_.guidance.find(stage); it != s_.guidance.end()) {
      for (const auto& g : it->second) out.push_back("Reviewer guidance: " + g);
    }
    return out;
  }

  /// Renders, calls and validates; one re-ask names the contract failures.
  Json ask_validated(int stage, const agents::Vars& vars, const std::string& tag,
                     const std::function<Json(const Json&)>& shape = nullptr) {
    std::vector<std::string> ovl = overlays(stage);
    std::string last;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::vector<std::string> all = ovl;
      if (!last.empty()) all.push_back("The previous answer was rejected: " + last);
      const auto prompt = agents::render_prompt(bank_, StageId::of(stage), vars, all);
      Json payload;
      try {
        payload = agents::call_agent(*deps_.backend, {tag, prompt}, transcript_).structured;
      } catch (const MalformedOutput& e) {
        last = e.what();
        continue;
      }
      if (shape) payload = shape(payload);
      const auto report = svc_.contracts.validate_payload(StageId::of(stage), payload);
      if (report.ok()) return payload;
      last = failure_codes(report);
    }
    throw StageFailure(fmt::format("stage {} output failed its contract after one re-ask: {}", stage, last),
                       error_namespace(svc_, stage) + "CONTRACT");
  }

  StageResult generic(int stage) {
    StageResult r;
    r.payload = ask_validated(stage, base_vars(stage), stage_tag(stage));
    return r;
  }

  StageResult topic_init() {
    auto vars = base_vars(1);
    vars["domains"] = text::join(svc_.domains.ids(), ", ");
    vars["project_name"] = cfg_.project_name;
    vars["quality_threshold"] = fmt::format("{:g}", cfg_.quality_threshold);
    StageResult r;
    r.payload = ask_validated(1, vars, stage_tag(1));
    return r;
  }

  debate::PanelContext panel_context(int stage, agents::Vars vars) {
    return {&bank_, deps_.backend, transcript_, std::move(vars), overlays(stage)};
  }

  static std::string panel_record(const std::vector<debate::RoleOutput>& outs) {
    Json j = Json::array();
    for (const auto& o : debate::canonical_order(outs)) {
      j.push_back({{"role", o.role}, {"content", o.content}, {"transcript_ref", o.transcript_ref}});
    }
    return j.dump(2);
  }

  StageResult hypothesis_gen() {
    const auto cfg = debate::make_panel_config(debate::PanelKind::Hypothesis, profile_, svc_.settings.panel_size);
    const auto ctx = panel_context(stages::kHypothesisGen, base_vars(stages::kHypothesisGen));
    const auto outs = debate::run_panel(cfg, ctx);
    const auto set = debate::synthesize_hypotheses(outs, ctx);
    StageResult r;
    r.payload = set.payload();
    r.uncertainty = debate::disagreement(outs);
    Json roles = Json::array();
    for (const auto& role : cfg.roles) roles.push_back(role.name);
    r.payload["panel"] = {{"roles", roles}, {"disagreement", r.uncertainty}};
    const auto report = svc_.contracts.validate_payload(StageId::of(stages::kHypothesisGen), r.payload);
    if (!report.ok()) throw StageFailure("synthesized hypotheses fail the contract: " + failure_codes(report), "E-HYPO-CONTRACT");
    r.stage_files["debate.json"] = panel_record(outs);
    return r;
  }

  double historical_failure_rate() {
    try {
      evolution::LessonStore lessons(store_.state_dir() / "lessons.journal");
      const evolution::DecayParams p{svc_.settings.half_life_days, deps_.clock->now()};
      const auto found = lessons.retrieve("repair", p, 5, svc_.settings.overlays.floor);
      return static_cast<double>(found.size()) / 5.0;
    } catch (const Error& e) {
      s_.warnings.push_back(std::string("historical failure rate unavailable: ") + e.what());
      return 0.0;
    }
  }

  StageResult code_generation() {
    const Json& design = artifact(s_, stages::kExperimentDesign);
    const auto score = executor::score_complexity(design.value("plan", Json::object()), svc_.settings.caps,
                                                  historical_failure_rate());
    const auto conditions = condition_names(design.value("conditions", Json::array()));
    executor::CodegenContext ctx{&bank_, deps_.external, deps_.backend, transcript_,
                                 base_vars(stages::kCodeGeneration), overlays(stages::kCodeGeneration)};
    const auto gen = executor::generate_code(score, conditions, ctx);
    const auto report = executor::validate_code(gen.bundle, svc_.rules);
    StageResult r;
    r.payload = gen.bundle.to_json();
    r.payload["tier"] = executor::to_string(gen.tier);
    r.payload["complexity"] = score.to_json();
    r.payload["validation"] = report.to_json();
    r.payload["tier_attempts"] = gen.attempts_json();
    const auto files = std::max<std::size_t>(1, gen.bundle.files.size());
    r.uncertainty = std::min(1.0, static_cast<double>(report.warnings() + report.errors()) / static_cast<double>(files));
    const auto v = svc_.contracts.validate_payload(StageId::of(stages::kCodeGeneration), r.payload);
    if (!v.ok()) throw StageFailure("generated bundle fails the contract: " + failure_codes(v), "E-CODE-CONTRACT");
    return r;
  }

  executor::CodeBundle current_bundle() const {
    if (s_.refine_pending && !s_.archived.empty()) {
      const auto& prev = s_.archived.back().artifacts;
      if (auto it = prev.find(stages::kIterativeRefine); it != prev.end() && it->second.contains("bundle")) {
        return executor::CodeBundle::from_json(it->second["bundle"]);
      }
    }
    return executor::CodeBundle::from_json(artifact(s_, stages::kCodeGeneration));
  }

  fs::path exec_dir(int attempt) const {
    return store_.run_dir(s_.run_id) / "exec" /
           fmt::format("attempt-{}-refine-{}-try-{}", s_.budget.pivots_used + 1, s_.budget.refines_used, attempt);
  }

  /// Static validation first; findings become a validation-phase failure.
  executor::ExecutionResult execute(const executor::CodeBundle& bundle, int attempt) {
    const auto report = executor::validate_code(bundle, svc_.rules);
    if (!report.ok()) {
      executor::ExecutionResult res;
      res.result_id = "validation-" + sha256_hex(bundle.to_json().dump()).substr(0, 12);
      res.ok = false;
      res.exit_code = 1;
      std::string log;
      for (const auto& f : report.findings) {
        if (f.severity == executor::Severity::Error) log += fmt::format("{}:{}: {}: {}\n", f.file, f.line, f.rule, f.message);
      }
      res.logs = log;
      res.failure = executor::make_signature(executor::ExecPhase::Validation, "validation-error", log);
      return res;
    }
    const auto policy = executor::network_policy_from_string(cfg_.network_policy);
    const fs::path dir = exec_dir(attempt);
    fs::create_directories(dir);
    return deps_.runtime->execute(bundle, policy, svc_.settings.limits, dir);
  }

  StageResult experiment_run() {
    executor::CodeBundle bundle = current_bundle();
    Json improvement = nullptr;
    if (s_.refine_pending && !s_.archived.empty()) {
      // Refine re-enters here: patch the code with the weak-result analysis before running again.
      const auto& prev = s_.archived.back().artifacts;
      auto it = prev.find(stages::kResultAnalysis);
      const std::string analysis = it == prev.end() ? "{}" : it->second.dump(2);
      Json files = Json::object();
      for (const auto& [p, src] : bundle.files) files[p] = src;
      const auto prompt = agents::render_subprompt(bank_, "iterative_improve", {{"analysis", analysis}, {"files", files.dump(2)}},
                                                   overlays(stages::kIterativeRefine));
      const auto resp = agents::call_agent(*deps_.backend, {"stage13/improve", prompt}, transcript_);
      bundle = executor::apply_patch(bundle, resp.structured);
      improvement = resp.structured;
    }
    const auto res = execute(bundle, 0);
    StageResult r;
    r.payload = {{"status", res.ok ? "ok" : "failed"}, {"result", res.to_json()}, {"bundle", bundle.to_json()}};
    if (res.failure) r.payload["failure"] = res.failure->to_json();
    if (!improvement.is_null()) r.payload["improvement"] = improvement;
    r.stage_files["logs.txt"] = res.logs;
    return r;
  }

  std::optional<verify::VerifiedRegistry> previous_registry() const {
    if (!s_.archived.empty()) {
      for (auto a = s_.archived.rbegin(); a != s_.archived.rend(); ++a) {
        // Only refine cycles of the current hypothesis attempt carry results forward.
        if (a->label.find("/refine-") == std::string::npos) break;
        auto it = a->artifacts.find(stages::kIterativeRefine);
        if (it != a->artifacts.end() && it->second.contains("registry")) {
          return verify::VerifiedRegistry::from_json(it->second["registry"]);
        }
      }
    }
    return std::nullopt;
  }

  StageResult iterative_refine() {
    const Json& run = artifact(s_, stages::kExperimentRun);
    executor::CodeBundle bundle = executor::CodeBundle::from_json(run.at("bundle"));
    executor::ExecutionResult result = executor::ExecutionResult::from_json(run.at("result"));
    executor::RepairBudget budget{svc_.settings.repair_budget, {}};
    executor::RepairContext ctx{&bank_, deps_.backend, transcript_, &svc_.rules, overlays(stages::kIterativeRefine)};
    std::string status = result.ok ? "not_needed" : "repaired";
    int attempts = 0;
    Json history = Json::array();
    while (!result.ok) {
      const auto sig = *result.failure;
      s_.events.push_back({"repair_failure", stages::kIterativeRefine, sig.excerpt.substr(0, 200), sig.category, sig.fingerprint});
      auto outcome = executor::repair(sig, bundle, budget, ctx);
      if (outcome.exhausted) {
        s_.events.push_back({"repair_exhausted", stages::kIterativeRefine, sig.excerpt.substr(0, 200), sig.category, sig.fingerprint});
        s_.warnings.push_back(fmt::format("repair budget exhausted on {} ({})", sig.category, sig.fingerprint.substr(0, 12)));
        status = "exhausted";
        break;
      }
      ++attempts;
      bundle = *outcome.patched;
      result = execute(bundle, attempts);
      history.push_back({{"attempt", attempts},
                         {"signature", sig.to_json()},
                         {"cost", outcome.cost},
                         {"repeated", outcome.repeated},
                         {"ok", result.ok}});
    }

    auto registry = previous_registry();
    if (result.ok) {
      const verify::MetricsSource src{result.result_id, result.metrics};
      if (registry) {
        registry->supersede(src);
      } else {
        registry = verify::VerifiedRegistry::build({src});
      }
    }
    if (!registry) registry = verify::VerifiedRegistry::build({});

    const std::string primary = artifact(s_, stages::kExperimentDesign).value("primary_metric", "");
    const auto verdict = result.ok ? executor::degenerate_metrics_check(executor::condition_means(result.metrics), primary)
                                   : executor::DegenerateVerdict::NotApplicable;
    const bool degenerate = verdict == executor::DegenerateVerdict::Degenerate;
    if (degenerate) {
      s_.warnings.push_back("degenerate metrics: " + primary + " is identical across all conditions");
      s_.events.push_back({"degenerate_metrics", stages::kIterativeRefine, primary, "verification", ""});
    }

    StageResult r;
    r.payload = {{"status", status},
                 {"attempts", attempts},
                 {"bundle", bundle.to_json()},
                 {"result", result.to_json()},
                 {"degenerate", degenerate},
                 {"degenerate_check", executor::to_string(verdict)},
                 {"repair_budget", budget.to_json()},
                 {"repairs", history},
                 {"registry", registry->to_json()}};
    r.uncertainty = std::min(1.0, static_cast<double>(attempts) / std::max(1, svc_.settings.repair_budget));
    r.run_files["registry.json"] = registry->to_json().dump(2);
    return r;
  }

  verify::VerifiedRegistry registry() const {
    auto it = s_.artifacts.find(stages::kIterativeRefine);
    if (it == s_.artifacts.end() || !it->second.contains("registry")) return verify::VerifiedRegistry::build({});
    return verify::VerifiedRegistry::from_json(it->second["registry"]);
  }

  StageResult result_analysis() {
    const auto reg = registry();
    auto vars = base_vars(stages::kResultAnalysis);
    vars["registry"] = debate::registry_view(reg).dump(2);
    const auto cfg = debate::make_panel_config(debate::PanelKind::Analysis, profile_, svc_.settings.panel_size);
    const auto ctx = panel_context(stages::kResultAnalysis, vars);
    const auto outs = debate::run_panel(cfg, ctx);
    const debate::HypothesisSet hyps{artifact(s_, stages::kHypothesisGen).value("hypotheses", Json::array())};
    const auto assessment = debate::synthesize_assessment(outs, hyps, reg, ctx);
    StageResult r;
    r.payload = assessment.payload();
    r.uncertainty = debate::disagreement(outs);
    Json roles = Json::array();
    for (const auto& role : cfg.roles) roles.push_back(role.name);
    r.payload["panel"] = {{"roles", roles}, {"disagreement", r.uncertainty}};
    const auto report = svc_.contracts.validate_payload(StageId::of(stages::kResultAnalysis), r.payload);
    if (!report.ok()) throw StageFailure("assessment fails the contract: " + failure_codes(report), "E-ANALYSIS-CONTRACT");
    r.stage_files["debate.json"] = panel_record(outs);
    return r;
  }

  std::string template_name() const {
    return profile_.preferred_template.empty() ? "article" : profile_.preferred_template;
  }

  /// Fills table markers, attaches the bibliography and verifies every number.
  /// One re-ask names the rejected values; a second reject fails the stage.
  StageResult verified_manuscript(int stage, agents::Vars vars, const std::string& tables_text) {
    std::vector<std::string> ovl = overlays(stage);
    std::string last;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::vector<std::string> all = ovl;
      if (!last.empty()) all.push_back(last);
      const auto prompt = agents::render_prompt(bank_, StageId::of(stage), vars, all);
      Json doc;
      try {
        doc = agents::call_agent(*deps_.backend, {stage_tag(stage), prompt}, transcript_).structured;
      } catch (const MalformedOutput& e) {
        last = std::string("The previous answer was not a structured document: ") + e.what();
        continue;
      }
      Json manuscript = fill_tables(manuscript_of(doc), tables_text);
      manuscript["bibliography"] = bibliography_from(s_);
      const auto reg = registry();
      const auto check = verify::verify_document(manuscript, reg, svc_.claims);
      if (!check.accepted) {
        const std::string values = text::join(check.rejected_values, ", ");
        s_.events.push_back({"doc_rejected", stage, values, "verification", ""});
        last = "The previous draft was rejected. These numbers are not in the verified registry: " + values +
               ". Use only registry values in abstract, results and experiments.";
        continue;
      }
      StageResult r;
      r.payload = {{"manuscript", check.manuscript}, {"verification", check.to_json()}};
      if (doc.is_object()) {
        for (const auto& [k, v] : doc.items()) {
          if (k != "manuscript" && k != "title" && k != "sections" && !r.payload.contains(k)) r.payload[k] = v;
        }
      }
      return r;
    }
    throw StageFailure(fmt::format("stage {} manuscript rejected by numeric verification: {}", stage, last),
                       error_namespace(svc_, stage) + "UNVERIFIED");
  }

  StageResult paper_draft() {
    const auto reg = registry();
    std::string tables;
    Json tables_json = Json::array();
    if (!reg.empty()) {
      const auto spec = verify::default_table_spec(reg, "1");
      tables = verify::render_verified_table(reg, spec);
      tables_json.push_back({{"spec", spec.to_json()}, {"text", tables}});
    }
    auto vars = base_vars(stages::kPaperDraft);
    vars["verified_tables"] = tables.empty() ? "(no verified results)" : tables;
    vars["template"] = template_name();
    StageResult r = verified_manuscript(stages::kPaperDraft, vars, tables);
    r.payload["tables"] = tables_json;
    const auto v = svc_.contracts.validate_payload(StageId::of(stages::kPaperDraft), r.payload);
    if (!v.ok()) throw StageFailure("draft fails the contract: " + failure_codes(v), "E-DRAFT-CONTRACT");
    return r;
  }

  StageResult paper_revision() {
    const Json& draft = artifact(s_, stages::kPaperDraft);
    std::string tables;
    for (const auto& t : draft.value("tables", Json::array())) tables += t.value("text", "");
    StageResult r = verified_manuscript(stages::kPaperRevision, base_vars(stages::kPaperRevision), tables);
    if (!r.payload.contains("responses")) r.payload["responses"] = Json::array();
    const auto lengths = enforce_section_lengths(r.payload["manuscript"], svc_.section_targets);
    r.payload["length_report"] = to_json(lengths);
    for (const auto& row : lengths) {
      if (row.verdict != LengthVerdict::In) {
        s_.warnings.push_back(fmt::format("length guard: {} has {} words, target {}-{}", row.section, row.actual,
                                          row.target.min_words, row.target.max_words));
      }
    }
    const auto v = svc_.contracts.validate_payload(StageId::of(stages::kPaperRevision), r.payload);
    if (!v.ok()) throw StageFailure("revision fails the contract: " + failure_codes(v), "E-REVISE-CONTRACT");
    return r;
  }

  StageResult knowledge_archive() {
    StageResult r;
    r.payload = {{"lessons", Json::array()}, {"warnings", Json::array()}};
    try {
      evolution::LessonStore lessons(store_.state_dir() / "lessons.journal");
      const auto found = evolution::extract_lessons(s_, format_iso8601(deps_.clock->now()));
      lessons.append(found);
      for (const auto& l : found) r.payload["lessons"].push_back(l.to_json());
    } catch (const std::exception& e) {
      r.payload["warnings"].push_back(std::string("lesson extraction failed: ") + e.what());
    }
    return r;
  }

  StageResult export_publish() {
    const Json manuscript = artifact(s_, stages::kPaperRevision).at("manuscript");
    const auto check = verify::verify_document(manuscript, registry(), svc_.claims);
    if (!check.accepted) {
      throw StageFailure("export blocked: unverified numbers " + text::join(check.rejected_values, ", "),
                         "E-EXPORT-UNVERIFIED");
    }
    StageResult r;
    const std::string latex = render_latex(manuscript, template_name());
    const std::string bibtex = verify::to_bibtex(manuscript.value("bibliography", Json::array()));
    r.payload = {{"latex", latex},
                 {"bibtex", bibtex},
                 {"template", template_name()},
                 {"fabrication_check",
                  {{"accepted", check.accepted}, {"claims", check.verdicts.size()}, {"rejected", check.rejected_values}}}};
    r.run_files["paper/export/main.tex"] = latex;
    r.run_files["paper/export/references.bib"] = bibtex;
    return r;
  }

  StageResult citation_verify() {
    const Json manuscript = artifact(s_, stages::kPaperRevision).at("manuscript");
    auto relevance = [&](const verify::CitationRecord& rec) {
      std::string context;
      const std::string needle = rec.key;
      for (const auto& sec : manuscript.value("sections", Json::array())) {
        const std::string t = sec.value("text", "");
        const auto pos = t.find(needle);
        if (pos != std::string::npos) {
          context += t.substr(pos > 200 ? pos - 200 : 0, 400) + "\n";
        }
      }
      const auto prompt = agents::render_subprompt(
          bank_, "citation_relevance",
          {{"claimed", rec.title}, {"resolved", rec.resolved.dump()}, {"context", context.empty() ? "(uncited)" : context}});
      const auto resp = agents::call_agent(*deps_.backend, {"stage23/relevance/" + rec.key, prompt}, transcript_);
      if (!resp.structured.is_object() || !resp.structured.contains("relevant") || !resp.structured["relevant"].is_boolean()) {
        throw MalformedOutput("relevance answer has no boolean 'relevant'");
      }
      return resp.structured["relevant"].get<bool>();
    };
    const auto report = verify::verify_bibliography(manuscript, *deps_.citations, svc_.settings.endpoints, relevance);
    for (const auto& rec : report.records) {
      for (const auto& w : rec.warnings) s_.warnings.push_back("citation " + rec.key + ": " + w);
    }
    StageResult r;
    const std::string latex = render_latex(report.manuscript, template_name());
    const std::string bibtex = verify::to_bibtex(report.manuscript.value("bibliography", Json::array()));
    Json records = Json::array();
    for (const auto& rec : report.records) records.push_back(rec.to_json());
    r.payload = {{"records", records},
                 {"removed", report.removed},
                 {"summary", report.summary()},
                 {"latex", latex},
                 {"bibtex", bibtex}};
    r.run_files["paper/main.tex"] = latex;
    r.run_files["paper/references.bib"] = bibtex;
    r.run_files["paper/manuscript.json"] = report.manuscript.dump(2);
    r.run_files["paper/citations.json"] = report.to_json().dump(2);
    return r;
  }

  const Services& svc_;
  const Deps& deps_;
  const RunStore& store_;
  agents::TranscriptLog* transcript_;
  const RunConfig& cfg_;
  RunState& s_;
  const agents::PromptBank& bank_;
  const agents::DomainProfile& profile_;
};

}  // namespace

StageResult Orchestrator::run_stage(RunState& s, const RunConfig& cfg, int stage) {
  StageRunner runner(svc_, deps_, store_, transcript_.get(), cfg, s);
  return runner.run(stage);
}

// ---------------------------------------------------------------------------
// Run lifecycle

RunState Orchestrator::start(const RunConfig& cfg_in, const RunOptions& opts) {
  RunConfig cfg = cfg_in;
  cfg.check();
  if (text::trim(cfg.topic).empty()) throw InvalidRequest("a run needs a topic");
  if (cfg.domain_override && !svc_.domains.contains(*cfg.domain_override)) {
    throw InvalidRequest("unknown domain '" + *cfg.domain_override + "'");
  }
  RunState s;
  s.created_at = s.updated_at = now();
  if (cfg.run_id.empty()) {
    cfg.run_id = "run-" + sha256_hex(cfg.topic + "\n" + s.created_at + "\n" + cfg.mode).substr(0, 10);
  }
  if (store_.exists(cfg.run_id)) throw Conflict("run " + cfg.run_id + " already exists");
  s.run_id = cfg.run_id;
  s.topic = cfg.topic;
  s.mode = cfg.mode;
  s.budget.max_pivots = cfg.budget.max_pivots;
  s.budget.max_refines = cfg.budget.max_refines;

  store_.create(s, cfg);
  transcript_ = std::make_unique<agents::TranscriptLog>(store_.run_dir(s.run_id) / "transcript.jsonl");

  agents::DetectionInputs in;
  in.forced_override = cfg.domain_override;
  in.rules = &svc_.keywords;
  in.registry = &svc_.domains;
  in.classifier = deps_.backend;
  in.classifier_bank = &svc_.banks.for_domain("ml");
  in.transcript = transcript_.get();
  const auto detection = agents::detect_domain(s.topic, in);
  s.domain = detection.domain;
  for (const auto& w : detection.warnings) s.warnings.push_back("domain detection: " + w);

  persist(s);
  events_.append("run.started", s.run_id, {{"topic", s.topic}, {"mode", s.mode}, {"domain", s.domain},
                                           {"detection_level", detection.level}});
  return drive(std::move(s), cfg, opts);
}

RunState Orchestrator::resume(const std::string& run_id, const RunOptions& opts) {
  RunState s = store_.load(run_id);
  const RunConfig cfg = store_.config(run_id);
  if (s.status == RunStatus::Completed || s.status == RunStatus::Failed) return s;
  transcript_ = std::make_unique<agents::TranscriptLog>(store_.run_dir(run_id) / "transcript.jsonl");
  transcript_->restore(s.backend_state.value("transcript", std::size_t{0}));
  deps_.backend->restore_state(s.backend_state.value("primary", Json::object()));
  if (deps_.external && deps_.external != deps_.backend) {
    deps_.external->restore_state(s.backend_state.value("external", Json::object()));
  }
  events_.append("run.resumed", s.run_id, {{"stage", s.current_stage}, {"status", to_string(s.status)}});
  return drive(std::move(s), cfg, opts);
}

void Orchestrator::persist(RunState& s) {
  s.backend_state = {{"primary", deps_.backend->snapshot_state()},
                     {"transcript", transcript_ ? transcript_->size() : 0}};
  if (deps_.external && deps_.external != deps_.backend) s.backend_state["external"] = deps_.external->snapshot_state();
  store_.save(s);
}

void Orchestrator::archive_lessons(const RunState& s) {
  try {
    evolution::LessonStore lessons(store_.state_dir() / "lessons.journal");
    lessons.append(evolution::extract_lessons(s, now()));
  } catch (const std::exception&) {
    // Lesson extraction never decides a run's outcome.
  }
}

void Orchestrator::fail(RunState& s, int stage, const std::string& code, const std::string& message) {
  s.status = RunStatus::Failed;
  s.failure = {{"stage", stage}, {"code", code}, {"message", message}};
  s.updated_at = now();
  archive_lessons(s);
  persist(s);
  events_.append("run.failed", s.run_id, s.failure);
}

void Orchestrator::commit(RunState& s, int stage, const Json& payload) {
  store_.write_stage_file(s, stage, "payload.json", payload.dump(2));
  s = advance(s, payload, now());
  if (s.current_stage != stage) s.guidance.erase(stage);
  persist(s);
  events_.append("stage.completed", s.run_id, {{"stage", stage}, {"next", s.current_stage}, {"status", to_string(s.status)}});
  if (s.status == RunStatus::Completed) events_.append("run.completed", s.run_id, {{"interventions", s.interventions}});
}

bool Orchestrator::settle_gate(RunState& s, const RunConfig& cfg, const RunOptions& opts) {
  const fs::path sp_file = store_.state_dir() / "smartpause.json";
  for (;;) {
    hitl::GateTicket t = gates_.get(*s.open_ticket);
    if (t.open() && cfg.auto_approve_after_s) {
      const auto opened = parse_iso8601(t.opened_at);
      if (deps_.clock->now() - opened >= std::chrono::seconds(*cfg.auto_approve_after_s)) {
        hitl::Resolution r{hitl::GateAction::Approve, nullptr, "", "auto-approve", now()};
        t = gates_.resolve(t.id, r, svc_.contracts);
      }
    }
    if (t.open() && opts.on_gate) {
      if (auto r = opts.on_gate(t)) {
        if (r->timestamp.empty()) r->timestamp = now();
        try {
          t = gates_.resolve(t.id, *r, svc_.contracts);
        } catch (const Conflict&) {
          t = gates_.get(t.id);
        }
        if (t.open()) continue;  // rejected edit: ask again
      }
    }
    if (t.open()) {
      if (!opts.wait_for_gates) return false;
      std::this_thread::sleep_for(opts.poll_interval);
      continue;
    }
    const int stage = t.stage;
    const fs::path stage_dir = store_.stage_dir(s, stage);
    const auto applied = hitl::apply_resolution(s, t, svc_.contracts);
    auto sp = hitl::SmartPauseState::load_or_default(sp_file, svc_.settings.smartpause);
    hitl::smartpause_update(sp, stage, applied.outcome).save(sp_file);
    gates_.mark_applied(t.id);
    if (!applied.rerun) {
      const Json& payload = t.resolution->action == hitl::GateAction::Edit ? t.resolution->edited_payload : t.payload_snapshot;
      fs::create_directories(stage_dir);
      write_file_atomic(stage_dir / "payload.json", payload.dump(2));
    }
    s = applied.state;
    if (!applied.rerun && s.current_stage != stage) s.guidance.erase(stage);
    persist(s);
    events_.append("ticket.applied", s.run_id,
                   {{"ticket", t.id}, {"stage", stage}, {"action", hitl::to_string(t.resolution->action)}});
    if (applied.rerun) {
      events_.append("stage.rerun", s.run_id, {{"stage", stage}});
    } else {
      events_.append("stage.completed", s.run_id, {{"stage", stage}, {"next", s.current_stage}, {"status", to_string(s.status)}});
      if (s.status == RunStatus::Completed) events_.append("run.completed", s.run_id, {{"interventions", s.interventions}});
    }
    return true;
  }
}

RunState Orchestrator::drive(RunState s, const RunConfig& cfg, const RunOptions& opts) {
  const auto mode = hitl::mode_spec(hitl::mode_from_string(s.mode), svc_.settings.thorough_stages);
  const fs::path sp_file = store_.state_dir() / "smartpause.json";
  std::optional<int> stop_after = opts.stop_after_stage;

  while (true) {
    if (s.status == RunStatus::AwaitingGate) {
      const int gated = gates_.get(*s.open_ticket).stage;
      if (!settle_gate(s, cfg, opts)) {
        events_.append("run.awaiting_gate", s.run_id, {{"ticket", *s.open_ticket}, {"stage", gated}});
        return s;
      }
      if (stop_after && gated == *stop_after && s.current_stage != gated) return s;
      continue;
    }
    if (s.status != RunStatus::Running) return s;

    const int stage = s.current_stage;
    events_.append("stage.started", s.run_id, {{"stage", stage}, {"name", std::string(StageId::of(stage).name())}});
    StageResult result;
    try {
      result = run_stage(s, cfg, stage);
      const auto report = svc_.contracts.validate_payload(StageId::of(stage), result.payload);
      if (!report.ok()) {
        throw StageFailure(fmt::format("stage {} output failed its contract: {}", stage, failure_codes(report)),
                           error_namespace(svc_, stage) + "CONTRACT");
      }
    } catch (const StageFailure& e) {
      fail(s, stage, e.code(), e.what());
      return s;
    } catch (const PanelError& e) {
      fail(s, stage, error_namespace(svc_, stage) + "PANEL", std::string(e.what()) + " (role " + e.role() + ")");
      return s;
    } catch (const TransportError& e) {
      fail(s, stage, error_namespace(svc_, stage) + "TRANSPORT", e.what());
      return s;
    } catch (const MalformedOutput& e) {
      fail(s, stage, error_namespace(svc_, stage) + "MALFORMED", e.what());
      return s;
    } catch (const RenderError& e) {
      fail(s, stage, error_namespace(svc_, stage) + "RENDER", e.what());
      return s;
    } catch (const Error& e) {
      fail(s, stage, error_namespace(svc_, stage) + "INTERNAL", e.what());
      return s;
    }
    for (const auto& [name, content] : result.stage_files) store_.write_stage_file(s, stage, name, content);
    for (const auto& [rel, content] : result.run_files) store_.write_run_file(s.run_id, rel, content);

    const auto sp = hitl::SmartPauseState::load_or_default(sp_file, svc_.settings.smartpause);
    const std::string ticket_id = gates_.next_ticket_id(s.run_id, stage);
    if (auto ticket = hitl::maybe_open_gate(s, stage, result.uncertainty, mode, sp, result.payload, ticket_id, now())) {
      store_.write_stage_file(s, stage, "pending.json", result.payload.dump(2));
      gates_.open(*ticket);
      persist(s);
      continue;
    }
    commit(s, stage, result.payload);
    if (stop_after && stage == *stop_after) return s;
  }
}

}  // namespace labloop::pipeline
