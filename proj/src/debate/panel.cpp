#include "labloop/debate/panel.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <future>
#include <set>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::debate {

namespace {

std::string stage_tag(PanelKind kind) { return kind == PanelKind::Hypothesis ? "stage08" : "stage14"; }
int stage_of(PanelKind kind) { return kind == PanelKind::Hypothesis ? 8 : 14; }

std::string var(const PanelContext& ctx, const std::string& name) {
  auto it = ctx.vars.find(name);
  return it == ctx.vars.end() ? std::string{} : it->second;
}

std::string render_outputs(const std::vector<RoleOutput>& outputs, const std::string& skip = {}) {
  std::string out;
  for (const auto& o : outputs) {
    if (o.role == skip) continue;
    out += "### " + o.role + "\n" + o.content.dump(2) + "\n";
  }
  return out;
}

template <typename Fn>
std::vector<RoleOutput> run_round(const PanelConfig& cfg, Fn&& call) {
  std::vector<RoleOutput> out(cfg.k());
  if (cfg.concurrent) {
    std::vector<std::future<RoleOutput>> pending;
    for (const auto& role : cfg.roles) pending.push_back(std::async(std::launch::async, [&call, &role] { return call(role); }));
    for (std::size_t i = 0; i < pending.size(); ++i) out[i] = pending[i].get();
  } else {
    for (std::size_t i = 0; i < cfg.k(); ++i) out[i] = call(cfg.roles[i]);
  }
  return out;
}

agents::AgentResponse ask(const PanelContext& ctx, const std::string& tag, const agents::RenderedPrompt& prompt,
                          const std::string& role) {
  try {
    return agents::call_agent(*ctx.backend, {tag, prompt}, ctx.transcript);
  } catch (const PanelError&) {
    throw;
  } catch (const Error& e) {
    throw PanelError(fmt::format("{} failed: {}", role, e.what()), role);
  }
}

}  // namespace

void PanelConfig::check() const {
  if (roles.size() < 2) throw ConfigError(fmt::format("debate panel needs at least 2 roles, got {}", roles.size()));
  std::set<std::string> names;
  for (const auto& r : roles) {
    if (!names.insert(r.name).second) throw ConfigError("duplicate debate role " + r.name);
  }
}

PanelConfig make_panel_config(PanelKind kind, const agents::DomainProfile& profile, std::size_t k) {
  const auto& roster = kind == PanelKind::Hypothesis ? profile.debate_roles_hypothesis : profile.debate_roles_analysis;
  if (k > roster.size()) {
    throw ConfigError(fmt::format("domain {} defines {} roles, panel asks for {}", profile.id, roster.size(), k));
  }
  PanelConfig cfg;
  cfg.kind = kind;
  cfg.roles.assign(roster.begin(), roster.begin() + static_cast<std::ptrdiff_t>(k));
  cfg.synthesizer_prompt = kind == PanelKind::Hypothesis ? "hypothesis_synthesize" : "analysis_synthesize";
  cfg.check();
  return cfg;
}

std::vector<RoleOutput> canonical_order(std::vector<RoleOutput> outputs) {
  std::sort(outputs.begin(), outputs.end(), [](const RoleOutput& a, const RoleOutput& b) { return a.role < b.role; });
  return outputs;
}

std::vector<RoleOutput> run_panel(const PanelConfig& cfg, const PanelContext& ctx) {
  cfg.check();
  if (!ctx.bank || !ctx.backend) throw ConfigError("debate panel needs a prompt bank and a backend");
  const std::string tag = stage_tag(cfg.kind);
  const StageId stage = StageId::of(stage_of(cfg.kind));

  auto drafts = run_round(cfg, [&](const agents::RoleDescriptor& role) {
    agents::Vars vars = ctx.vars;
    vars["role"] = role.name;
    vars["stance"] = role.stance;
    const auto prompt = agents::render_prompt(*ctx.bank, stage, vars, ctx.overlays);
    auto resp = ask(ctx, tag + "/draft/" + role.name, prompt, role.name);
    return RoleOutput{role.name, Json{{"draft", resp.structured}}, resp.transcript_seq};
  });
  const auto ordered = canonical_order(drafts);

  auto critiques = run_round(cfg, [&](const agents::RoleDescriptor& role) {
    agents::Vars vars{{"role", role.name},
                      {"stance", role.stance},
                      {"topic", var(ctx, "topic")},
                      {"drafts", render_outputs(ordered, role.name)}};
    const auto prompt = agents::render_subprompt(*ctx.bank, "debate_critique", vars);
    auto resp = ask(ctx, tag + "/critique/" + role.name, prompt, role.name);
    return RoleOutput{role.name, resp.structured, resp.transcript_seq};
  });

  for (std::size_t i = 0; i < drafts.size(); ++i) {
    drafts[i].content["critique"] = critiques[i].content;
    drafts[i].transcript_ref = critiques[i].transcript_ref;
  }
  return drafts;
}

double disagreement(const std::vector<RoleOutput>& outputs) {
  if (outputs.empty()) return 0.0;
  std::size_t objecting = 0;
  for (const auto& o : outputs) {
    const Json crit = o.content.value("critique", Json::object());
    if (crit.is_object() && crit.contains("objections") && crit["objections"].is_array() && !crit["objections"].empty()) {
      ++objecting;
    }
  }
  return static_cast<double>(objecting) / static_cast<double>(outputs.size());
}

std::vector<std::string> hypothesis_set_problems(const Json& hypotheses) {
  std::vector<std::string> problems;
  if (!hypotheses.is_array()) return {"hypotheses is not a list"};
  if (hypotheses.size() < 2 || hypotheses.size() > 4) {
    problems.push_back(fmt::format("expected 2 to 4 hypotheses, got {}", hypotheses.size()));
  }
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const Json& h = hypotheses[i];
    auto nonempty = [&](const char* f) {
      return h.is_object() && h.contains(f) && !h[f].is_null() && !(h[f].is_string() && h[f].get<std::string>().empty()) &&
             !(h[f].is_array() && h[f].empty());
    };
    if (!nonempty("statement")) problems.push_back(fmt::format("hypothesis {} has no statement", i + 1));
    if (!h.is_object() || !h.contains("falsifiable") || !h["falsifiable"].is_boolean()) {
      problems.push_back(fmt::format("hypothesis {} has no falsifiable flag", i + 1));
    }
    if (!nonempty("testability_criteria")) problems.push_back(fmt::format("hypothesis {} has no testability criteria", i + 1));
    if (!nonempty("required_baselines")) problems.push_back(fmt::format("hypothesis {} has no required baselines", i + 1));
  }
  return problems;
}

HypothesisSet synthesize_hypotheses(const std::vector<RoleOutput>& outputs, const PanelContext& ctx) {
  const auto ordered = canonical_order(outputs);
  agents::Vars vars{{"topic", var(ctx, "topic")}, {"role_outputs", render_outputs(ordered)}};
  std::vector<std::string> overlays;
  std::string last_problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto prompt = agents::render_subprompt(*ctx.bank, "hypothesis_synthesize", vars, overlays);
    Json hyps;
    try {
      auto resp = agents::call_agent(*ctx.backend, {"stage08/synthesize", prompt}, ctx.transcript);
      hyps = resp.structured.is_object() ? resp.structured.value("hypotheses", Json()) : resp.structured;
    } catch (const MalformedOutput& e) {
      last_problem = e.what();
      overlays = {"The previous answer was not a structured document. " + last_problem};
      continue;
    } catch (const Error& e) {
      throw PanelError(std::string("synthesizer failed: ") + e.what(), "synthesizer");
    }
    const auto problems = hypothesis_set_problems(hyps);
    if (problems.empty()) {
      HypothesisSet set;
      for (std::size_t i = 0; i < hyps.size(); ++i) {
        Json h = hyps[i];
        if (!h.contains("id") || !h["id"].is_string() || h["id"].get<std::string>().empty()) h["id"] = fmt::format("H{}", i + 1);
        set.hypotheses.push_back(h);
      }
      return set;
    }
    last_problem = text::join(problems, "; ");
    overlays = {"The previous answer was rejected: " + last_problem + ". Return 2 to 4 complete hypotheses."};
  }
  throw PanelError("hypothesis synthesis failed after one re-ask: " + last_problem, "synthesizer");
}

Json ResultAssessment::payload() const {
  return {{"verdicts", verdicts},
          {"supported_claims", supported_claims},
          {"unsupported_claims", unsupported_claims},
          {"limitations", limitations},
          {"quality_rating", quality_rating}};
}

namespace {

Json valid_refs(const Json& item, const verify::VerifiedRegistry& reg) {
  Json refs = Json::array();
  if (item.is_object() && item.contains("registry_refs") && item["registry_refs"].is_array()) {
    for (const auto& r : item["registry_refs"]) {
      if (r.is_string() && reg.find(r.get<std::string>())) refs.push_back(r);
    }
  }
  return refs;
}

std::vector<std::string> assessment_problems(const Json& doc, const HypothesisSet& hyps) {
  std::vector<std::string> problems;
  if (!doc.is_object()) return {"assessment is not an object"};
  const Json verdicts = doc.value("verdicts", Json::array());
  std::map<std::string, int> seen;
  static const std::set<std::string> legal{"supported", "refuted", "inconclusive"};
  for (const auto& v : verdicts) {
    if (!v.is_object() || !v.contains("hypothesis") || !v["hypothesis"].is_string()) {
      problems.push_back("verdict without hypothesis id");
      continue;
    }
    ++seen[v["hypothesis"].get<std::string>()];
    if (!v.contains("verdict") || !v["verdict"].is_string() || !legal.count(v["verdict"].get<std::string>())) {
      problems.push_back("illegal verdict for " + v["hypothesis"].get<std::string>());
    }
  }
  for (const auto& h : hyps.hypotheses) {
    const std::string id = h.value("id", "");
    if (seen[id] != 1) problems.push_back(fmt::format("hypothesis {} has {} verdicts", id, seen[id]));
  }
  for (const auto& [id, n] : seen) {
    bool known = std::any_of(hyps.hypotheses.begin(), hyps.hypotheses.end(),
                             [&](const Json& h) { return h.value("id", "") == id; });
    if (!known) problems.push_back("verdict for unknown hypothesis " + id);
  }
  if (!doc.contains("quality_rating") || !doc["quality_rating"].is_number_integer() ||
      doc["quality_rating"].get<int>() < 1 || doc["quality_rating"].get<int>() > 10) {
    problems.push_back("quality_rating must be an integer in 1..10");
  }
  return problems;
}

}  // namespace

void ground_assessment(ResultAssessment& a, const verify::VerifiedRegistry& reg) {
  for (auto& v : a.verdicts) {
    Json refs = valid_refs(v, reg);
    v["registry_refs"] = refs;
    if (v.value("verdict", "") == "supported" && refs.empty()) {
      v["verdict"] = "inconclusive";
      a.notes.push_back("verdict for " + v.value("hypothesis", "?") + " downgraded: no registry reference");
    }
  }
  Json kept = Json::array();
  for (const auto& c : a.supported_claims) {
    Json refs = valid_refs(c, reg);
    if (refs.empty()) {
      const std::string claim = c.is_string() ? c.get<std::string>() : c.value("claim", c.dump());
      a.unsupported_claims.push_back({{"claim", claim}, {"reason", "no registry reference"}});
      a.notes.push_back("claim demoted: " + claim);
    } else {
      Json item = c;
      item["registry_refs"] = refs;
      kept.push_back(item);
    }
  }
  a.supported_claims = kept;
}

ResultAssessment synthesize_assessment(const std::vector<RoleOutput>& outputs, const HypothesisSet& hypotheses,
                                       const verify::VerifiedRegistry& registry, const PanelContext& ctx) {
  const auto ordered = canonical_order(outputs);
  agents::Vars vars{{"topic", var(ctx, "topic")},
                    {"hypotheses", hypotheses.hypotheses.dump(2)},
                    {"registry", registry_view(registry).dump(2)},
                    {"role_outputs", render_outputs(ordered)}};
  std::vector<std::string> overlays;
  std::string last_problem;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto prompt = agents::render_subprompt(*ctx.bank, "analysis_synthesize", vars, overlays);
    Json doc;
    try {
      doc = agents::call_agent(*ctx.backend, {"stage14/synthesize", prompt}, ctx.transcript).structured;
    } catch (const MalformedOutput& e) {
      last_problem = e.what();
      overlays = {"The previous answer was not a structured document. " + last_problem};
      continue;
    } catch (const Error& e) {
      throw PanelError(std::string("synthesizer failed: ") + e.what(), "synthesizer");
    }
    const auto problems = assessment_problems(doc, hypotheses);
    if (problems.empty()) {
      ResultAssessment a;
      a.verdicts = doc["verdicts"];
      a.supported_claims = doc.value("supported_claims", Json::array());
      a.unsupported_claims = doc.value("unsupported_claims", Json::array());
      a.limitations = doc.value("limitations", Json::array());
      a.quality_rating = doc["quality_rating"].get<int>();
      ground_assessment(a, registry);
      return a;
    }
    last_problem = text::join(problems, "; ");
    overlays = {"The previous answer was rejected: " + last_problem + ". Give exactly one verdict per hypothesis."};
  }
  throw PanelError("assessment synthesis failed after one re-ask: " + last_problem, "synthesizer");
}

Json registry_view(const verify::VerifiedRegistry& reg) {
  Json view = Json::object();
  for (const auto& [key, e] : reg.entries()) {
    view[key] = {{"mean", e.mean}, {"std", e.stddev}, {"n", e.seed_values.size()}};
  }
  return view;
}

}  // namespace labloop::debate
