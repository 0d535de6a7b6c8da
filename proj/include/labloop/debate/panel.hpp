#pragma once

#include <string>
#include <vector>

#include "labloop/agents/backend.hpp"
#include "labloop/agents/domain.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/json.hpp"
#include "labloop/verify/registry.hpp"

namespace labloop::debate {

enum class PanelKind { Hypothesis, Analysis };

struct PanelConfig {
  PanelKind kind = PanelKind::Hypothesis;
  std::vector<agents::RoleDescriptor> roles;
  std::string synthesizer_prompt;  // subprompt name
  bool concurrent = false;         // issue the calls of one round in parallel

  std::size_t k() const { return roles.size(); }
  /// Throws ConfigError when K < 2 or role names repeat.
  void check() const;
};

/// The first K roles of the profile's hypothesis or analysis roster.
PanelConfig make_panel_config(PanelKind kind, const agents::DomainProfile& profile, std::size_t k = 3);

struct PanelContext {
  const agents::PromptBank* bank = nullptr;
  agents::AgentBackend* backend = nullptr;
  agents::TranscriptLog* transcript = nullptr;
  /// topic, domain_context, context and any stage-specific placeholders.
  agents::Vars vars;
  std::vector<std::string> overlays;
};

struct RoleOutput {
  std::string role;
  Json content;  // {"draft": ..., "critique": ...}
  std::size_t transcript_ref = 0;
};

/// Orders outputs by role name; synthesis input depends only on this order.
std::vector<RoleOutput> canonical_order(std::vector<RoleOutput> outputs);

/// Round one collects an independent draft from every role; round two shows
/// each role the other drafts and collects its critique. Any failed call
/// raises PanelError naming the role.
std::vector<RoleOutput> run_panel(const PanelConfig& cfg, const PanelContext& ctx);

/// Share of roles whose critique raised at least one objection.
double disagreement(const std::vector<RoleOutput>& outputs);

struct HypothesisSet {
  Json hypotheses = Json::array();
  Json payload() const { return {{"hypotheses", hypotheses}}; }
};

/// Empty when the set holds 2 to 4 hypotheses that each carry a statement,
/// a falsifiable flag, testability criteria and required baselines.
std::vector<std::string> hypothesis_set_problems(const Json& hypotheses);

/// One synthesizer call over the canonically ordered outputs, re-asked once
/// if the answer breaks the set invariants.
HypothesisSet synthesize_hypotheses(const std::vector<RoleOutput>& outputs, const PanelContext& ctx);

struct ResultAssessment {
  Json verdicts = Json::array();  // [{hypothesis, verdict, registry_refs}]
  Json supported_claims = Json::array();
  Json unsupported_claims = Json::array();
  Json limitations = Json::array();
  int quality_rating = 1;
  std::vector<std::string> notes;  // demotions applied while grounding

  Json payload() const;
};

/// Forces every verdict and supported claim to cite registry entries: a
/// supported verdict without a valid reference becomes inconclusive and an
/// ungrounded supported claim moves to unsupported_claims.
void ground_assessment(ResultAssessment& a, const verify::VerifiedRegistry& reg);

ResultAssessment synthesize_assessment(const std::vector<RoleOutput>& outputs, const HypothesisSet& hypotheses,
                                       const verify::VerifiedRegistry& registry, const PanelContext& ctx);

/// Compact {key: {mean, std, n}} view handed to agents.
Json registry_view(const verify::VerifiedRegistry& reg);

}  // namespace labloop::debate
