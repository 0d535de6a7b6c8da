#include "labloop/core/transitions.hpp"

#include <fmt/format.h>

#include "labloop/common/error.hpp"
#include "labloop/core/stage.hpp"

namespace labloop {

std::set<int> transition_targets(int stage) {
  StageId::of(stage);
  if (stage == stages::kResearchDecision) {
    return {stages::kExperimentRun, stages::kHypothesisGen, stages::kPaperOutline};
  }
  if (stage == StageId::kCount) return {};
  return {stage + 1};
}

ResolvedDecision resolve_decision(const RunBudget& budget, DecisionKind requested) {
  ResolvedDecision r{requested, requested, false};
  if (requested == DecisionKind::Refine && budget.refines_used >= budget.max_refines) {
    r.applied = DecisionKind::Proceed;
    r.forced = true;
  }
  if (requested == DecisionKind::Pivot && budget.pivots_used + 1 >= budget.max_pivots) {
    r.applied = DecisionKind::Proceed;
    r.forced = true;
  }
  return r;
}

namespace {

void check_budget(const RunBudget& b) {
  if (b.pivots_used < 0 || b.refines_used < 0 || b.pivots_used > b.max_pivots ||
      b.refines_used > b.max_refines) {
    throw TransitionError(fmt::format("budget out of range: pivots {}/{}, refines {}/{}", b.pivots_used,
                                      b.max_pivots, b.refines_used, b.max_refines));
  }
}

ArchivedAttempt take_range(std::map<int, Json>& artifacts, int first, int last, std::string label) {
  ArchivedAttempt a{std::move(label), {}};
  for (int s = first; s <= last; ++s) {
    auto it = artifacts.find(s);
    if (it == artifacts.end()) continue;
    a.artifacts.emplace(s, std::move(it->second));
    artifacts.erase(it);
  }
  return a;
}

}  // namespace

RunState advance(const RunState& state, const Json& stage_output, const std::string& timestamp) {
  if (state.status != RunStatus::Running) {
    throw TransitionError("cannot advance a run whose status is " + to_string(state.status));
  }
  check_budget(state.budget);
  const int stage = state.current_stage;
  StageId::of(stage);

  RunState next = state;
  if (!timestamp.empty()) next.updated_at = timestamp;
  next.artifacts[stage] = stage_output;

  if (stage != stages::kResearchDecision) {
    if (stage == StageId::kCount) {
      next.status = RunStatus::Completed;
    } else {
      next.current_stage = stage + 1;
    }
    if (stage == stages::kExperimentRun) next.refine_pending = false;
    return next;
  }

  const Decision d = Decision::from_payload(stage_output);
  const ResolvedDecision r = resolve_decision(state.budget, d.kind);
  ++next.stage15_visits;
  Json record{{"visit", next.stage15_visits},
              {"requested", to_string(r.requested)},
              {"applied", to_string(r.applied)},
              {"forced", r.forced},
              {"pivots_used", state.budget.pivots_used},
              {"refines_used", state.budget.refines_used},
              {"justification", d.justification}};
  next.decisions.push_back(record);
  if (r.forced) {
    next.warnings.push_back(fmt::format("{} budget exhausted at stage-15 visit {}; forced Proceed",
                                        to_string(r.requested), next.stage15_visits));
  }

  switch (r.applied) {
    case DecisionKind::Proceed:
      next.current_stage = stages::kPaperOutline;
      break;
    case DecisionKind::Refine: {
      ++next.budget.refines_used;
      next.archived.push_back(take_range(
          next.artifacts, stages::kExperimentRun, stages::kResearchDecision,
          fmt::format("attempt-{}/refine-{}", next.budget.pivots_used + 1, next.budget.refines_used)));
      next.current_stage = stages::kExperimentRun;
      next.refine_pending = true;
      break;
    }
    case DecisionKind::Pivot: {
      ++next.budget.pivots_used;
      next.budget.refines_used = 0;
      next.archived.push_back(take_range(next.artifacts, stages::kHypothesisGen, stages::kResearchDecision,
                                         fmt::format("attempt-{}", next.budget.pivots_used)));
      next.events.push_back({"pivot", stage, d.justification, "decision", ""});
      next.current_stage = stages::kHypothesisGen;
      next.refine_pending = false;
      break;
    }
  }
  return next;
}

}  // namespace labloop
