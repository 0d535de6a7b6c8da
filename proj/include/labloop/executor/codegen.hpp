#pragma once

#include <string>
#include <vector>

#include "labloop/agents/backend.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/executor/bundle.hpp"
#include "labloop/executor/complexity.hpp"

namespace labloop::executor {

struct CodegenContext {
  const agents::PromptBank* bank = nullptr;
  /// Backend of kind external_coder; null means the tier is unavailable.
  agents::AgentBackend* external = nullptr;
  agents::AgentBackend* builtin = nullptr;
  agents::TranscriptLog* transcript = nullptr;
  agents::Vars vars;  // topic, domain_context, context
  std::vector<std::string> overlays;
};

struct TierAttempt {
  GeneratorTier tier;
  bool ok = false;
  std::string error;
};

struct CodegenResult {
  CodeBundle bundle;
  GeneratorTier tier = GeneratorTier::LegacySingleShot;
  std::vector<TierAttempt> attempts;

  Json attempts_json() const;
};

/// Strips a surrounding ``` fence from a single-file answer.
std::string strip_code_fence(const std::string& text);

/// Starts at select_generator(score) and falls through the cascade until a
/// tier yields a bundle that satisfies the bundle invariants. Throws
/// StageFailure (E-CODE-ALL_TIERS) when every tier fails.
CodegenResult generate_code(const ComplexityScore& score, const std::vector<std::string>& declared_conditions,
                            const CodegenContext& ctx);

}  // namespace labloop::executor
