#pragma once

#include <map>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"

namespace labloop::hitl {

enum class GateOutcome { ApprovedUnchanged, Overridden };

struct SmartPauseConfig {
  double initial_theta = 0.5;
  double learning_rate = 0.1;
  double target_approval = 0.8;
};

struct StageHistory {
  double theta = 0.5;
  int approvals = 0;
  int overrides = 0;
};

/// Per-stage uncertainty thresholds. A stage pauses when its reported
/// uncertainty exceeds theta.
struct SmartPauseState {
  SmartPauseConfig config;
  std::map<int, StageHistory> stages;

  double theta(int stage) const;
  Json to_json() const;
  static SmartPauseState from_json(const Json& j);
  static SmartPauseState load_or_default(const fs::path& file, const SmartPauseConfig& cfg = {});
  void save(const fs::path& file) const;
};

/// theta <- clamp(theta + eta * ([approved] - target), 0, 1); counts increment.
SmartPauseState smartpause_update(SmartPauseState state, int stage, GateOutcome outcome);

}  // namespace labloop::hitl
