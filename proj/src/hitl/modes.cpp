#include "labloop/hitl/modes.hpp"

#include "labloop/common/error.hpp"
#include "labloop/core/stage.hpp"

namespace labloop::hitl {

std::string to_string(InterventionMode m) {
  switch (m) {
    case InterventionMode::FullAuto: return "FullAuto";
    case InterventionMode::GateOnly: return "GateOnly";
    case InterventionMode::CoPilot: return "CoPilot";
    case InterventionMode::Thorough: return "Thorough";
    case InterventionMode::StepByStep: return "StepByStep";
    case InterventionMode::PreExperiment: return "PreExperiment";
    case InterventionMode::PostExperiment: return "PostExperiment";
  }
  return "FullAuto";
}

const std::vector<InterventionMode>& all_modes() {
  static const std::vector<InterventionMode> modes{
      InterventionMode::FullAuto,   InterventionMode::GateOnly,      InterventionMode::CoPilot,
      InterventionMode::Thorough,   InterventionMode::StepByStep,    InterventionMode::PreExperiment,
      InterventionMode::PostExperiment};
  return modes;
}

InterventionMode mode_from_string(const std::string& s) {
  for (auto m : all_modes()) {
    if (to_string(m) == s) return m;
  }
  throw InvalidRequest("unknown intervention mode '" + s +
                       "' (FullAuto, GateOnly, CoPilot, Thorough, StepByStep, PreExperiment, PostExperiment)");
}

ModeSpec mode_spec(InterventionMode mode, const std::optional<std::set<int>>& thorough_stages) {
  ModeSpec spec{mode, {}, false};
  switch (mode) {
    case InterventionMode::FullAuto:
      break;
    case InterventionMode::GateOnly:
      spec.gated_stages = {5, 9, 20};
      break;
    case InterventionMode::CoPilot:
      spec.gated_stages = {5, 8, 9, 14, 17, 20};
      spec.smartpause = true;
      break;
    case InterventionMode::Thorough:
      if (thorough_stages) {
        spec.gated_stages = *thorough_stages;
      } else {
        for (int s : phase_boundary_stages()) spec.gated_stages.insert(s);
      }
      break;
    case InterventionMode::StepByStep:
      for (int s = 1; s <= StageId::kCount; ++s) spec.gated_stages.insert(s);
      break;
    case InterventionMode::PreExperiment:
      spec.gated_stages = {5, 8, 9};
      break;
    case InterventionMode::PostExperiment:
      spec.gated_stages = {14, 17, 20};
      break;
  }
  return spec;
}

std::set<int> stages_for_mode(InterventionMode mode, const std::optional<std::set<int>>& thorough_stages) {
  return mode_spec(mode, thorough_stages).gated_stages;
}

}  // namespace labloop::hitl
