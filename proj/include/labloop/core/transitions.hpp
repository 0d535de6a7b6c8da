#pragma once

#include <set>
#include <string>

#include "labloop/common/json.hpp"
#include "labloop/core/run_state.hpp"

namespace labloop {

/// Next stages reachable from `stage`. Only stage 15 branches:
/// Proceed -> 16, Refine -> 12, Pivot -> 8. Stage 23 has no successor.
std::set<int> transition_targets(int stage);

/// What a stage-15 decision turns into once the budget is applied.
struct ResolvedDecision {
  DecisionKind requested;
  DecisionKind applied;
  bool forced = false;  // budget exhaustion converted Refine/Pivot into Proceed
};

/// Refine is honored while refines_used < max_refines. Pivot is honored while
/// pivots_used + 1 < max_pivots: pivots_used counts finished hypothesis attempts
/// and the outer loop stops once it reaches max_pivots.
ResolvedDecision resolve_decision(const RunBudget& budget, DecisionKind requested);

/// Records `stage_output` as the artifact of state.current_stage and moves to the
/// next stage. The payload must already satisfy the stage contract.
/// Throws TransitionError when the run is not running, the stage-15 payload
/// has no decision, or the budget counters are already out of range.
RunState advance(const RunState& state, const Json& stage_output, const std::string& timestamp = {});

}  // namespace labloop
