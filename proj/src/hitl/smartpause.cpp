#include "labloop/hitl/smartpause.hpp"

#include <algorithm>

namespace labloop::hitl {

double SmartPauseState::theta(int stage) const {
  auto it = stages.find(stage);
  return it == stages.end() ? config.initial_theta : it->second.theta;
}

Json SmartPauseState::to_json() const {
  Json st = Json::object();
  for (const auto& [s, h] : stages) {
    st[std::to_string(s)] = {{"theta", h.theta}, {"approvals", h.approvals}, {"overrides", h.overrides}};
  }
  return {{"config",
           {{"initial_theta", config.initial_theta},
            {"learning_rate", config.learning_rate},
            {"target_approval", config.target_approval}}},
          {"stages", st}};
}

SmartPauseState SmartPauseState::from_json(const Json& j) {
  SmartPauseState s;
  const Json c = j.value("config", Json::object());
  s.config.initial_theta = c.value("initial_theta", s.config.initial_theta);
  s.config.learning_rate = c.value("learning_rate", s.config.learning_rate);
  s.config.target_approval = c.value("target_approval", s.config.target_approval);
  const Json stages_doc = j.value("stages", Json::object());
  for (const auto& [k, v] : stages_doc.items()) {
    s.stages[std::stoi(k)] = {v.value("theta", s.config.initial_theta), v.value("approvals", 0),
                              v.value("overrides", 0)};
  }
  return s;
}

SmartPauseState SmartPauseState::load_or_default(const fs::path& file, const SmartPauseConfig& cfg) {
  if (!fs::exists(file)) return SmartPauseState{cfg, {}};
  return from_json(Json::parse(read_file(file)));
}

void SmartPauseState::save(const fs::path& file) const {
  fs::create_directories(file.parent_path());
  write_file_atomic(file, to_json().dump(2));
}

SmartPauseState smartpause_update(SmartPauseState state, int stage, GateOutcome outcome) {
  StageHistory& h = state.stages.try_emplace(stage, StageHistory{state.config.initial_theta, 0, 0}).first->second;
  const double approved = outcome == GateOutcome::ApprovedUnchanged ? 1.0 : 0.0;
  h.theta = std::clamp(h.theta + state.config.learning_rate * (approved - state.config.target_approval), 0.0, 1.0);
  if (outcome == GateOutcome::ApprovedUnchanged) {
    ++h.approvals;
  } else {
    ++h.overrides;
  }
  return state;
}

}  // namespace labloop::hitl
