#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "labloop/agents/backend.hpp"
#include "labloop/common/clock.hpp"
#include "labloop/core/run_state.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/hitl/gates.hpp"
#include "labloop/net/transport.hpp"
#include "labloop/pipeline/config.hpp"
#include "labloop/pipeline/run_store.hpp"

namespace labloop::pipeline {

/// Collaborators a run talks to. Only `external` may be null.
struct Deps {
  agents::AgentBackend* backend = nullptr;
  agents::AgentBackend* external = nullptr;
  net::Transport* citations = nullptr;
  executor::ContainerRuntime* runtime = nullptr;
  Clock* clock = nullptr;
};

struct RunOptions {
  /// Return after this stage is committed, leaving the run resumable.
  std::optional<int> stop_after_stage;
  /// Block on open tickets, polling for a resolution from another process.
  bool wait_for_gates = false;
  std::chrono::milliseconds poll_interval{500};
  /// Inline resolver (interactive terminal, tests). Returning nullopt leaves the ticket open.
  std::function<std::optional<hitl::Resolution>(const hitl::GateTicket&)> on_gate;
};

/// What one stage produced before gating and commit.
struct StageResult {
  Json payload;
  double uncertainty = 0.0;
  std::map<std::string, std::string> stage_files;  // written into the stage directory
  std::map<std::string, std::string> run_files;    // relative to the run directory
};

class Orchestrator {
 public:
  Orchestrator(const Services& services, Deps deps, RunStore& store, hitl::GateService& gates,
               hitl::EventLog& events);

  /// Validates the config, creates the run and drives it. Throws InvalidRequest
  /// before writing anything when the config is invalid.
  RunState start(const RunConfig& cfg, const RunOptions& opts = {});
  /// Continues from the latest checkpoint. A terminal run is returned unchanged.
  RunState resume(const std::string& run_id, const RunOptions& opts = {});

  /// Runs one stage without gating or committing. Exposed for tests.
  StageResult run_stage(RunState& s, const RunConfig& cfg, int stage);

 private:
  RunState drive(RunState s, const RunConfig& cfg, const RunOptions& opts);
  /// Handles an awaiting_gate run. Returns false when the run must stay parked.
  bool settle_gate(RunState& s, const RunConfig& cfg, const RunOptions& opts);
  void commit(RunState& s, int stage, const Json& payload);
  void fail(RunState& s, int stage, const std::string& code, const std::string& message);
  void persist(RunState& s);
  void archive_lessons(const RunState& s);
  std::string now();

  const Services& svc_;
  Deps deps_;
  RunStore& store_;
  hitl::GateService& gates_;
  hitl::EventLog& events_;
  std::unique_ptr<agents::TranscriptLog> transcript_;
};

/// Exit status the CLI maps run outcomes to.
int exit_code_for(const RunState& s);

}  // namespace labloop::pipeline
