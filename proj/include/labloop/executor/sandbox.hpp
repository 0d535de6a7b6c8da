#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/executor/bundle.hpp"

namespace labloop::executor {

/// Phase 0 installs dependencies, phase 1 fetches data, phase 2 runs the experiment.
enum class ExecPhase { Validation, Install, Data, Execute };
std::string to_string(ExecPhase p);

enum class NetworkPolicy { None, PipOnly, SetupOnly, Full };
std::string to_string(NetworkPolicy p);
/// Throws ConfigError for names outside {none, pip_only, setup_only, full}.
NetworkPolicy network_policy_from_string(const std::string& s);
bool network_allowed(NetworkPolicy policy, ExecPhase phase);

struct ResourceLimits {
  int memory_gb = 8;
  int shm_gb = 2;
  int wall_clock_s = 600;
  int uid = 1000;
  int gid = 1000;
  std::string image = "labloop/sandbox-ml:latest";
};

struct FailureSignature {
  ExecPhase phase = ExecPhase::Execute;
  std::string category;
  std::string excerpt;      // bounded log snippet
  std::string fingerprint;  // sha256 of category and normalized excerpt

  Json to_json() const;
  static FailureSignature from_json(const Json& j);
};

/// Lowercases, masks digits and hex addresses, collapses whitespace and keeps
/// the last 400 characters.
std::string normalize_excerpt(const std::string& log);
FailureSignature make_signature(ExecPhase phase, const std::string& category, const std::string& log);
/// import-error, syntax-error, name-error, oom, network-error, timeout, or runtime-error.
std::string classify_failure(const std::string& log);

struct ExecutionResult {
  std::string result_id;
  bool ok = false;
  int exit_code = 0;
  Json metrics = Json::object();  // harness document {"records": [...]}
  std::string logs;
  std::vector<std::string> artifacts;
  std::optional<FailureSignature> failure;
  double elapsed_s = 0.0;

  Json to_json() const;
  static ExecutionResult from_json(const Json& j);
};

/// The measurement side of the read-only harness. Records are accepted only
/// for declared conditions, and no condition gets a second repetition until
/// every declared condition has one.
class Harness {
 public:
  explicit Harness(std::vector<std::string> declared_conditions);

  /// Throws InvariantViolation on an undeclared condition or an out-of-order repetition.
  void report(const std::string& condition, const std::string& metric, const Json& seed, double value);
  Json document() const;

 private:
  std::vector<std::string> declared_;
  std::map<std::string, std::set<std::string>> reps_;  // condition -> seeds seen
  Json records_ = Json::array();
};

class ContainerRuntime {
 public:
  virtual ~ContainerRuntime() = default;
  virtual ExecutionResult execute(const CodeBundle& bundle, NetworkPolicy policy, const ResourceLimits& limits,
                                  const fs::path& workdir) = 0;
};

/// In-process stand-in for the container. It follows the phase, network and
/// wall-clock contract but interprets `sandbox/behavior.json` from the bundle
/// instead of running Python:
///
///   {"install": [...], "data": [...], "execute": [...]}
///
/// with actions {"op": "report", condition, metric, seed, value},
/// {"op": "sleep", seconds}, {"op": "fetch", url}, {"op": "write", path, content},
/// {"op": "stdout", text} and {"op": "fail", message}. Time is virtual: sleeps
/// advance a counter checked against the wall-clock limit.
class FakeRuntime final : public ContainerRuntime {
 public:
  ExecutionResult execute(const CodeBundle& bundle, NetworkPolicy policy, const ResourceLimits& limits,
                          const fs::path& workdir) override;
  /// Fetches attempted while the network was open, for assertions.
  const std::vector<std::string>& network_log() const { return network_log_; }

 private:
  std::vector<std::string> network_log_;
};

struct CommandResult {
  int exit_code = 0;
  std::string output;
};

class CommandRunner {
 public:
  virtual ~CommandRunner() = default;
  virtual CommandResult run(const std::vector<std::string>& argv, int timeout_s) = 0;
};

/// Runs argv through the shell-free posix_spawn path and captures combined output.
class ProcessRunner final : public CommandRunner {
 public:
  CommandResult run(const std::vector<std::string>& argv, int timeout_s) override;
};

/// docker run per phase with --rm, the host uid:gid, memory and shm limits,
/// and iptables rules that drop outbound traffic before the phase-2 entrypoint.
class DockerRuntime final : public ContainerRuntime {
 public:
  DockerRuntime(CommandRunner& runner, fs::path harness_file, std::string docker = "docker")
      : runner_(runner), harness_file_(std::move(harness_file)), docker_(std::move(docker)) {}

  ExecutionResult execute(const CodeBundle& bundle, NetworkPolicy policy, const ResourceLimits& limits,
                          const fs::path& workdir) override;

  std::vector<std::string> phase_command(ExecPhase phase, NetworkPolicy policy, const ResourceLimits& limits,
                                         const fs::path& workdir, const CodeBundle& bundle) const;

 private:
  CommandRunner& runner_;
  fs::path harness_file_;
  std::string docker_;
};

}  // namespace labloop::executor
