#include "labloop/executor/codegen.hpp"

#include <fmt/format.h>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::executor {

Json CodegenResult::attempts_json() const {
  Json out = Json::array();
  for (const auto& a : attempts) out.push_back({{"tier", to_string(a.tier)}, {"ok", a.ok}, {"error", a.error}});
  return out;
}

std::string strip_code_fence(const std::string& text) {
  const std::string t = text::trim(text);
  if (!text::starts_with(t, "```")) return text;
  const auto first_nl = t.find('\n');
  const auto last = t.rfind("```");
  if (first_nl == std::string::npos || last <= first_nl) return text;
  return t.substr(first_nl + 1, last - first_nl - 1);
}

namespace {

CodeBundle bundle_from_document(const Json& doc, const std::vector<std::string>& conditions) {
  CodeBundle b = CodeBundle::from_json(doc);
  b.declared_conditions = conditions;
  if (b.blueprint.empty()) {
    for (const auto& [path, _] : b.files) b.blueprint.push_back({path, "", {}});
  }
  return b;
}

CodeBundle single_shot(agents::AgentBackend& backend, const std::string& tag, const CodegenContext& ctx,
                       const std::vector<std::string>& conditions) {
  const auto prompt = agents::render_prompt(*ctx.bank, StageId::of(10), ctx.vars, ctx.overlays);
  return bundle_from_document(agents::call_agent(backend, {tag, prompt}, ctx.transcript).structured, conditions);
}

CodeBundle multiphase(agents::AgentBackend& backend, const CodegenContext& ctx,
                      const std::vector<std::string>& conditions) {
  auto var = [&](const char* k) {
    auto it = ctx.vars.find(k);
    return it == ctx.vars.end() ? std::string{} : it->second;
  };
  const auto plan_prompt = agents::render_subprompt(*ctx.bank, "architecture_planning", {{"context", var("context")}},
                                                    ctx.overlays);
  const Json plan = agents::call_agent(backend, {"stage10/blueprint", plan_prompt}, ctx.transcript).structured;
  CodeBundle b;
  b.declared_conditions = conditions;
  b.entrypoint = plan.value("entrypoint", "main.py");
  for (const auto& e : plan.value("blueprint", Json::array())) {
    b.blueprint.push_back({e.value("path", ""), e.value("purpose", ""), e.value("depends_on", std::vector<std::string>{})});
  }
  if (b.blueprint.empty()) throw MalformedOutput("architecture plan has no files");
  std::string written;
  for (const auto& entry : b.blueprint) {
    const auto prompt = agents::render_subprompt(
        *ctx.bank, "generate_single_file",
        {{"path", entry.path}, {"blueprint", plan.dump(2)}, {"context", written.empty() ? "(none yet)" : written}});
    const auto resp = agents::call_agent(backend, {"stage10/file/" + entry.path, prompt}, ctx.transcript);
    b.files[entry.path] = strip_code_fence(resp.text);
    written += fmt::format("- {}: {}\n", entry.path, entry.purpose);
  }
  return b;
}

}  // namespace

CodegenResult generate_code(const ComplexityScore& score, const std::vector<std::string>& declared_conditions,
                            const CodegenContext& ctx) {
  if (!ctx.bank) throw ConfigError("code generation needs a prompt bank");
  CodegenResult result;
  for (GeneratorTier tier : tier_cascade(select_generator(score))) {
    TierAttempt attempt{tier, false, {}};
    try {
      CodeBundle b;
      switch (tier) {
        case GeneratorTier::ExternalCoder:
          if (!ctx.external) throw TransportError("external coder unavailable");
          b = single_shot(*ctx.external, "stage10/external", ctx, declared_conditions);
          break;
        case GeneratorTier::BuiltinMultiphase:
          if (!ctx.builtin) throw ConfigError("no built-in backend");
          b = multiphase(*ctx.builtin, ctx, declared_conditions);
          break;
        case GeneratorTier::LegacySingleShot:
          if (!ctx.builtin) throw ConfigError("no built-in backend");
          b = single_shot(*ctx.builtin, "stage10/legacy", ctx, declared_conditions);
          break;
      }
      const auto problems = b.invariant_problems();
      if (!problems.empty()) throw MalformedOutput(text::join(problems, "; "));
      attempt.ok = true;
      result.attempts.push_back(attempt);
      result.bundle = std::move(b);
      result.tier = tier;
      return result;
    } catch (const Error& e) {
      attempt.error = e.what();
      result.attempts.push_back(attempt);
    }
  }
  std::string why;
  for (const auto& a : result.attempts) why += fmt::format("{}: {}; ", to_string(a.tier), a.error);
  throw StageFailure("every code generation tier failed: " + why, "E-CODE-ALL_TIERS");
}

}  // namespace labloop::executor
