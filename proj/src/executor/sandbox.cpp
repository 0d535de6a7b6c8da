#include "labloop/executor/sandbox.hpp"

#include <cctype>
#include <fmt/format.h>
#include <poll.h>
#include <regex>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>

#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

extern char** environ;

namespace labloop::executor {

std::string to_string(ExecPhase p) {
  switch (p) {
    case ExecPhase::Validation: return "validation";
    case ExecPhase::Install: return "install";
    case ExecPhase::Data: return "data";
    case ExecPhase::Execute: return "execute";
  }
  return "execute";
}

namespace {

ExecPhase phase_from_string(const std::string& s) {
  if (s == "validation") return ExecPhase::Validation;
  if (s == "install") return ExecPhase::Install;
  if (s == "data") return ExecPhase::Data;
  return ExecPhase::Execute;
}

}  // namespace

std::string to_string(NetworkPolicy p) {
  switch (p) {
    case NetworkPolicy::None: return "none";
    case NetworkPolicy::PipOnly: return "pip_only";
    case NetworkPolicy::SetupOnly: return "setup_only";
    case NetworkPolicy::Full: return "full";
  }
  return "setup_only";
}

NetworkPolicy network_policy_from_string(const std::string& s) {
  if (s == "none") return NetworkPolicy::None;
  if (s == "pip_only") return NetworkPolicy::PipOnly;
  if (s == "setup_only") return NetworkPolicy::SetupOnly;
  if (s == "full") return NetworkPolicy::Full;
  throw ConfigError("unknown network policy '" + s + "' (none, pip_only, setup_only, full)");
}

bool network_allowed(NetworkPolicy policy, ExecPhase phase) {
  switch (policy) {
    case NetworkPolicy::None: return false;
    case NetworkPolicy::PipOnly: return phase == ExecPhase::Install;
    case NetworkPolicy::SetupOnly: return phase == ExecPhase::Install || phase == ExecPhase::Data;
    case NetworkPolicy::Full: return phase != ExecPhase::Validation;
  }
  return false;
}

Json FailureSignature::to_json() const {
  return {{"phase", to_string(phase)}, {"category", category}, {"excerpt", excerpt}, {"fingerprint", fingerprint}};
}

FailureSignature FailureSignature::from_json(const Json& j) {
  return {phase_from_string(j.value("phase", "execute")), j.value("category", ""), j.value("excerpt", ""),
          j.value("fingerprint", "")};
}

std::string normalize_excerpt(const std::string& log) {
  static const std::regex hex(R"(0x[0-9a-fA-F]+)");
  static const std::regex digits(R"([0-9]+)");
  static const std::regex space(R"(\s+)");
  std::string s = text::to_lower(log);
  s = std::regex_replace(s, hex, "<addr>");
  s = std::regex_replace(s, digits, "#");
  s = text::trim(std::regex_replace(s, space, " "));
  if (s.size() > 400) s = s.substr(s.size() - 400);
  return s;
}

FailureSignature make_signature(ExecPhase phase, const std::string& category, const std::string& log) {
  FailureSignature sig;
  sig.phase = phase;
  sig.category = category;
  sig.excerpt = log.size() > 2000 ? log.substr(log.size() - 2000) : log;
  sig.fingerprint = sha256_hex(category + "\n" + normalize_excerpt(log));
  return sig;
}

std::string classify_failure(const std::string& log) {
  static const std::pair<const char*, const char*> rules[] = {
      {"ModuleNotFoundError", "import-error"}, {"ImportError", "import-error"},
      {"SyntaxError", "syntax-error"},         {"IndentationError", "syntax-error"},
      {"NameError", "name-error"},             {"out of memory", "oom"},
      {"MemoryError", "oom"},                  {"Network is unreachable", "network-error"},
      {"ConnectionError", "network-error"},    {"Connection refused", "network-error"},
      {"TimeoutExpired", "timeout"},           {"timed out", "timeout"}};
  for (const auto& [needle, cat] : rules) {
    if (log.find(needle) != std::string::npos) return cat;
  }
  return "runtime-error";
}

Json ExecutionResult::to_json() const {
  Json j{{"result_id", result_id}, {"ok", ok},           {"exit_code", exit_code}, {"metrics", metrics},
         {"logs", logs},           {"artifacts", artifacts}, {"elapsed_s", elapsed_s}};
  j["failure"] = failure ? failure->to_json() : Json(nullptr);
  return j;
}

ExecutionResult ExecutionResult::from_json(const Json& j) {
  ExecutionResult r;
  r.result_id = j.value("result_id", "");
  r.ok = j.value("ok", false);
  r.exit_code = j.value("exit_code", 0);
  r.metrics = j.value("metrics", Json::object());
  r.logs = j.value("logs", "");
  r.artifacts = j.value("artifacts", std::vector<std::string>{});
  r.elapsed_s = j.value("elapsed_s", 0.0);
  if (j.contains("failure") && !j["failure"].is_null()) r.failure = FailureSignature::from_json(j["failure"]);
  return r;
}

Harness::Harness(std::vector<std::string> declared_conditions) : declared_(std::move(declared_conditions)) {}

void Harness::report(const std::string& condition, const std::string& metric, const Json& seed, double value) {
  if (std::find(declared_.begin(), declared_.end(), condition) == declared_.end()) {
    throw InvariantViolation("harness: condition '" + condition + "' was not declared");
  }
  const std::string s = seed.is_string() ? seed.get<std::string>() : seed.dump();
  auto& seen = reps_[condition];
  if (!seen.empty() && !seen.count(s)) {
    for (const auto& c : declared_) {
      if (reps_[c].empty()) {
        throw InvariantViolation(fmt::format(
            "harness: second repetition of '{}' before '{}' completed one (breadth-first ordering)", condition, c));
      }
    }
  }
  seen.insert(s);
  records_.push_back({{"condition", condition}, {"metric", metric}, {"seed", seed}, {"value", value}});
}

Json Harness::document() const { return {{"declared_conditions", declared_}, {"records", records_}}; }

namespace {

void write_under(const fs::path& root, const std::string& rel, const std::string& content) {
  const fs::path p = (root / rel).lexically_normal();
  const std::string rs = root.lexically_normal().string();
  if (rel.find("..") != std::string::npos || p.string().compare(0, rs.size(), rs) != 0) {
    throw InvariantViolation("write outside the sandbox: " + rel);
  }
  fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

std::string bundle_id(const CodeBundle& bundle, NetworkPolicy policy) {
  return "exec-" + sha256_hex(bundle.to_json().dump() + to_string(policy)).substr(0, 12);
}

}  // namespace

ExecutionResult FakeRuntime::execute(const CodeBundle& bundle, NetworkPolicy policy, const ResourceLimits& limits,
                                     const fs::path& workdir) {
  ExecutionResult res;
  res.result_id = bundle_id(bundle, policy);
  Harness harness(bundle.declared_conditions);
  const fs::path workspace = workdir.empty() ? fs::path{} : workdir / "workspace";
  const fs::path harness_out = workdir.empty() ? fs::path{} : workdir / "harness_out";

  auto fail = [&](ExecPhase phase, const std::string& category, const std::string& message, int code) {
    res.ok = false;
    res.exit_code = code;
    res.logs += message + "\n";
    res.failure = make_signature(phase, category, message);
    return res;
  };

  auto it = bundle.files.find("sandbox/behavior.json");
  if (it == bundle.files.end()) {
    return fail(ExecPhase::Execute, "runtime-error", "no runnable entrypoint: sandbox/behavior.json missing", 2);
  }
  Json behavior;
  try {
    behavior = Json::parse(it->second);
  } catch (const Json::exception& e) {
    return fail(ExecPhase::Execute, "syntax-error", std::string("SyntaxError: ") + e.what(), 1);
  }
  if (!workspace.empty()) {
    for (const auto& [path, src] : bundle.files) write_under(workspace, path, src);
  }

  double clock = 0.0;
  const std::pair<const char*, ExecPhase> phases[] = {
      {"install", ExecPhase::Install}, {"data", ExecPhase::Data}, {"execute", ExecPhase::Execute}};
  for (const auto& [name, phase] : phases) {
    for (const auto& action : behavior.value(name, Json::array())) {
      const std::string op = action.value("op", "");
      if (op == "sleep") {
        clock += action.value("seconds", 0.0);
        if (clock > limits.wall_clock_s) {
          res.elapsed_s = limits.wall_clock_s;
          return fail(phase, "timeout",
                      fmt::format("wall-clock limit of {} s exceeded in phase {}", limits.wall_clock_s, name), 124);
        }
      } else if (op == "fetch") {
        const std::string url = action.value("url", "");
        if (!network_allowed(policy, phase)) {
          return fail(phase, "network-error",
                      "ConnectionError: [Errno 101] Network is unreachable while fetching " + url, 1);
        }
        network_log_.push_back(url);
        res.logs += "fetched " + url + "\n";
      } else if (op == "report") {
        if (phase != ExecPhase::Execute) return fail(phase, "runtime-error", "harness is only available in phase 2", 1);
        try {
          harness.report(action.value("condition", ""), action.value("metric", ""), action.value("seed", Json(0)),
                         action.value("value", 0.0));
        } catch (const InvariantViolation& e) {
          return fail(phase, "harness-order", e.what(), 1);
        }
      } else if (op == "write") {
        if (!workspace.empty()) write_under(workspace, action.value("path", ""), action.value("content", ""));
        res.artifacts.push_back(action.value("path", ""));
      } else if (op == "stdout") {
        res.logs += action.value("text", "") + "\n";
      } else if (op == "fail") {
        const std::string msg = action.value("message", "error");
        return fail(phase, classify_failure(msg), msg, action.value("exit_code", 1));
      } else {
        return fail(phase, "runtime-error", "unknown behavior op '" + op + "'", 1);
      }
    }
  }
  res.elapsed_s = clock;
  res.metrics = harness.document();
  if (!harness_out.empty()) write_under(harness_out, "results/metrics.json", res.metrics.dump(2));
  res.ok = true;
  res.exit_code = 0;
  return res;
}

CommandResult ProcessRunner::run(const std::vector<std::string>& argv, int timeout_s) {
  if (argv.empty()) throw Error("empty command");
  int fds[2];
  if (pipe(fds) != 0) throw Error("pipe failed");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 1);
  posix_spawn_file_actions_adddup2(&actions, fds[1], 2);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    return {127, fmt::format("cannot start {}: error {}", argv[0], rc)};
  }
  CommandResult out;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_s);
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      kill(pid, SIGKILL);
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    if (poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000))) <= 0) continue;
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    out.output.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  out.exit_code = timed_out ? 124 : WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return out;
}

std::vector<std::string> DockerRuntime::phase_command(ExecPhase phase, NetworkPolicy policy,
                                                      const ResourceLimits& limits, const fs::path& workdir,
                                                      const CodeBundle& bundle) const {
  const bool net = network_allowed(policy, phase);
  const bool firewall = phase == ExecPhase::Execute && !net && policy != NetworkPolicy::None;
  std::vector<std::string> cmd{docker_, "run", "--rm"};
  if (!firewall) {
    cmd.insert(cmd.end(), {"--user", fmt::format("{}:{}", limits.uid, limits.gid)});
  } else {
    cmd.insert(cmd.end(), {"--cap-add", "NET_ADMIN"});
  }
  cmd.insert(cmd.end(), {"--memory", fmt::format("{}g", limits.memory_gb), "--shm-size",
                         fmt::format("{}g", limits.shm_gb), "--network", net || firewall ? "bridge" : "none"});
  cmd.insert(cmd.end(), {"-v", (workdir / "workspace").string() + ":/workspace", "-v",
                         harness_file_.string() + ":/opt/harness/harness.py:ro", "-v",
                         (workdir / "harness_out").string() + ":/harness_out", "-e", "PYTHONPATH=/opt/harness", "-e",
                         "LABLOOP_DECLARED_CONDITIONS=" + text::join(bundle.declared_conditions, ","), "-w",
                         "/workspace", limits.image});
  switch (phase) {
    case ExecPhase::Install:
      cmd.insert(cmd.end(), {"pip", "install", "--user", "-r", "requirements.txt"});
      break;
    case ExecPhase::Data:
      cmd.insert(cmd.end(), {"python", "setup_data.py"});
      break;
    case ExecPhase::Execute:
      if (firewall) {
        cmd.insert(cmd.end(),
                   {"sh", "-c",
                    fmt::format("iptables -P OUTPUT DROP && iptables -A OUTPUT -o lo -j ACCEPT && "
                                "exec setpriv --reuid={} --regid={} --clear-groups timeout {} python {}",
                                limits.uid, limits.gid, limits.wall_clock_s, bundle.entrypoint)});
      } else {
        cmd.insert(cmd.end(), {"timeout", std::to_string(limits.wall_clock_s), "python", bundle.entrypoint});
      }
      break;
    case ExecPhase::Validation:
      break;
  }
  return cmd;
}

ExecutionResult DockerRuntime::execute(const CodeBundle& bundle, NetworkPolicy policy, const ResourceLimits& limits,
                                       const fs::path& workdir) {
  ExecutionResult res;
  res.result_id = bundle_id(bundle, policy);
  fs::create_directories(workdir / "workspace");
  fs::create_directories(workdir / "harness_out");
  for (const auto& [path, src] : bundle.files) write_under(workdir / "workspace", path, src);

  const std::pair<ExecPhase, const char*> phases[] = {
      {ExecPhase::Install, "requirements.txt"}, {ExecPhase::Data, "setup_data.py"}, {ExecPhase::Execute, nullptr}};
  for (const auto& [phase, needs] : phases) {
    if (needs && !bundle.files.count(needs)) continue;
    const auto cmd = phase_command(phase, policy, limits, workdir, bundle);
    const CommandResult r = runner_.run(cmd, limits.wall_clock_s + 60);
    res.logs += r.output;
    if (r.exit_code != 0) {
      res.exit_code = r.exit_code;
      const std::string category = r.exit_code == 124 ? "timeout" : classify_failure(r.output);
      res.failure = make_signature(phase, category, r.output);
      return res;
    }
  }
  const fs::path metrics = workdir / "harness_out" / "results" / "metrics.json";
  if (fs::exists(metrics)) {
    try {
      res.metrics = Json::parse(read_file(metrics));
    } catch (const Json::exception&) {
      res.failure = make_signature(ExecPhase::Execute, "runtime-error", "harness output unreadable");
      return res;
    }
  }
  res.ok = true;
  return res;
}

}  // namespace labloop::executor
