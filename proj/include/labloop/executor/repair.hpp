#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/agents/backend.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/executor/bundle.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/executor/validate.hpp"

namespace labloop::executor {

/// Remaining repair attempts plus the fingerprints already tried. A repeated
/// fingerprint costs two attempts instead of one.
struct RepairBudget {
  int remaining = 3;
  std::set<std::string> seen;

  Json to_json() const;
};

struct RepairContext {
  const agents::PromptBank* bank = nullptr;
  agents::AgentBackend* backend = nullptr;
  agents::TranscriptLog* transcript = nullptr;
  const ValidationRuleset* rules = nullptr;
  std::vector<std::string> overlays;
};

struct RepairOutcome {
  bool exhausted = false;
  std::optional<CodeBundle> patched;
  CodeReport validation;  // of the patched bundle
  int cost = 0;
  bool repeated = false;
};

/// Files named in the failure excerpt, or the entrypoint when none are.
std::vector<std::string> offending_files(const FailureSignature& sig, const CodeBundle& bundle);

/// Charges the budget and asks the agent for a patch to the offending files.
/// Returns exhausted without calling the agent when no attempts remain.
RepairOutcome repair(const FailureSignature& sig, const CodeBundle& bundle, RepairBudget& budget,
                     const RepairContext& ctx);

/// Merges {"files": {path: content}} into the bundle.
CodeBundle apply_patch(const CodeBundle& bundle, const Json& patch);

enum class DegenerateVerdict { Degenerate, NotDegenerate, NotApplicable };
std::string to_string(DegenerateVerdict v);

/// condition -> metric -> value. Degenerate when the primary metric takes the
/// same value under every condition. Needs two conditions that report it.
DegenerateVerdict degenerate_metrics_check(const std::map<std::string, std::map<std::string, double>>& metrics,
                                           const std::string& primary_metric);

/// Per-condition means of a harness document.
std::map<std::string, std::map<std::string, double>> condition_means(const Json& harness_document);

}  // namespace labloop::executor
