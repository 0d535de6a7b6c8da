#pragma once

#include <memory>

#include "labloop/agents/backend.hpp"
#include "labloop/common/clock.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/hitl/gates.hpp"
#include "labloop/net/transport.hpp"
#include "labloop/pipeline/config.hpp"
#include "labloop/pipeline/orchestrator.hpp"
#include "labloop/pipeline/run_store.hpp"

namespace labloop::pipeline {

/// Store, event journal and ticket service rooted at one state directory.
struct Workspace {
  explicit Workspace(const fs::path& state_root)
      : store(state_root), events(store.state_dir() / "events.journal"), gates(store.runs_root(), &events) {}

  RunStore store;
  hitl::EventLog events;
  hitl::GateService gates;
};

/// Collaborators built from a run config: backend, citation transport,
/// container runtime and clock.
struct Session {
  std::shared_ptr<net::Transport> llm_transport;
  std::unique_ptr<agents::AgentBackend> backend;
  std::unique_ptr<net::Transport> citations;
  std::unique_ptr<executor::CommandRunner> runner;
  std::unique_ptr<executor::ContainerRuntime> runtime;
  std::unique_ptr<Clock> clock;

  Deps deps() const;

  /// The scripted backend reads `responses` and the citation transport reads
  /// `http_fixtures` from the fixture file. A fixed start_time selects a
  /// manual clock. Throws ConfigError for a missing fixture or unknown runtime.
  static Session open(const RunConfig& cfg, const Services& svc);
};

}  // namespace labloop::pipeline
