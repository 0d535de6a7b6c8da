#pragma once

#include <functional>
#include <memory>
#include <string>

#include "labloop/common/clock.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/core/contract.hpp"
#include "labloop/hitl/gates.hpp"

namespace httplib {
class Server;
}

namespace labloop::hitl {

inline constexpr int kApiVersion = 1;

struct ServerOptions {
  fs::path runs_root;
  std::string token;  // empty disables the bearer check
  int max_poll_seconds = 30;
  /// Called after a resolution is recorded, e.g. to resume the run in-process.
  std::function<void(const GateTicket&)> on_resolved;
};

/// HTTP API over runs, tickets, contracts and the event journal. Routes and
/// bodies follow api/openapi-like.contract.
class GateServer {
 public:
  GateServer(ServerOptions opts, GateService& gates, EventLog& events, const ContractSet& contracts, Clock& clock);
  ~GateServer();
  GateServer(const GateServer&) = delete;
  GateServer& operator=(const GateServer&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  void routes();

  ServerOptions opts_;
  GateService& gates_;
  EventLog& events_;
  const ContractSet& contracts_;
  Clock& clock_;
  std::unique_ptr<httplib::Server> server_;
  struct Worker;
  std::unique_ptr<Worker> worker_;
};

/// Reads a run's latest checkpoint; throws NotFound when the run has none.
RunState load_run(const fs::path& runs_root, const std::string& run_id);
std::vector<std::string> list_run_ids(const fs::path& runs_root);

}  // namespace labloop::hitl
