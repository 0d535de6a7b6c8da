#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace labloop::hitl {

enum class InterventionMode { FullAuto, GateOnly, CoPilot, Thorough, StepByStep, PreExperiment, PostExperiment };

std::string to_string(InterventionMode m);
/// Throws InvalidRequest for unknown names.
InterventionMode mode_from_string(const std::string& s);
const std::vector<InterventionMode>& all_modes();

struct ModeSpec {
  InterventionMode mode = InterventionMode::FullAuto;
  std::set<int> gated_stages;
  bool smartpause = false;
};

/// Thorough pauses at the last stage of each phase unless `thorough_stages` overrides it.
ModeSpec mode_spec(InterventionMode mode, const std::optional<std::set<int>>& thorough_stages = std::nullopt);
std::set<int> stages_for_mode(InterventionMode mode, const std::optional<std::set<int>>& thorough_stages = std::nullopt);

}  // namespace labloop::hitl
