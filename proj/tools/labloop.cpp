#include <unistd.h>

#include <fmt/format.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include "labloop/common/error.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/evolution/lessons.hpp"
#include "labloop/hitl/server.hpp"
#include "labloop/judge/judge.hpp"
#include "labloop/pipeline/session.hpp"
#include "labloop/verify/claims.hpp"
#include "labloop/verify/registry.hpp"

using namespace labloop;
using pipeline::RunConfig;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kNotFound = 3,
  kFailed = 4,
  kAwaitingGate = 5,
  kRejected = 6,
  kConflict = 7,
};

constexpr const char* kExitHelp =
    "Exit codes:\n"
    "  0  success (run completed, document accepted)\n"
    "  1  internal error\n"
    "  2  usage error or invalid config; nothing was written\n"
    "  3  run, ticket or file not found\n"
    "  4  run failed\n"
    "  5  run parked at a gate (--detach)\n"
    "  6  document rejected by numeric verification\n"
    "  7  ticket already resolved\n";

struct Common {
  std::string state_root;
  std::string config_dir;
  bool json = false;
};

pipeline::Services load_services(const Common& c) {
  return pipeline::Services::load(c.config_dir.empty() ? pipeline::default_config_dir() : fs::path(c.config_dir));
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

Json run_summary(const RunState& s) {
  return {{"run_id", s.run_id},
          {"status", to_string(s.status)},
          {"current_stage", s.current_stage},
          {"domain", s.domain},
          {"open_ticket", s.open_ticket ? Json(*s.open_ticket) : Json(nullptr)},
          {"interventions", s.interventions},
          {"warnings", s.warnings},
          {"failure", s.failure},
          {"exit_code", pipeline::exit_code_for(s)}};
}

void report_run(const RunState& s, const Common& c) {
  if (c.json) {
    print_json(run_summary(s));
    return;
  }
  switch (s.status) {
    case RunStatus::Completed:
      std::cout << fmt::format("run {} completed; paper under runs/{}/paper/\n", s.run_id, s.run_id);
      break;
    case RunStatus::AwaitingGate:
      std::cout << fmt::format("run {} awaiting gate at stage {}; ticket {}\n", s.run_id, s.current_stage,
                               s.open_ticket.value_or("?"));
      break;
    case RunStatus::Failed:
      std::cout << fmt::format("run {} failed at stage {}: {} {}\n", s.run_id, s.failure.value("stage", 0),
                               s.failure.value("code", ""), s.failure.value("message", ""));
      break;
    case RunStatus::Running:
      std::cout << fmt::format("run {} paused before stage {}\n", s.run_id, s.current_stage);
      break;
  }
  for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
}

/// Inline gate prompt for interactive terminals.
std::optional<hitl::Resolution> prompt_gate(const hitl::GateTicket& t) {
  std::cout << fmt::format("\nGate {} at stage {} ({}), uncertainty {:.2f}\n", t.id, t.stage, t.reason, t.uncertainty);
  std::cout << t.payload_snapshot.dump(2) << "\n";
  for (;;) {
    std::cout << "[a]pprove, [e]dit <file>, [r]eject <guidance>, [g]uidance <text>, [d]etach > " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return std::nullopt;
    const std::string cmd = line.substr(0, line.find(' '));
    const std::string arg = line.find(' ') == std::string::npos ? "" : line.substr(line.find(' ') + 1);
    hitl::Resolution r;
    r.actor = "terminal";
    if (cmd == "a" || cmd == "approve") return r;
    if (cmd == "d" || cmd == "detach") return std::nullopt;
    if ((cmd == "e" || cmd == "edit") && !arg.empty()) {
      try {
        r.action = hitl::GateAction::Edit;
        r.edited_payload = Json::parse(read_file(arg));
        return r;
      } catch (const std::exception& e) {
        std::cout << "cannot read edit: " << e.what() << "\n";
        continue;
      }
    }
    if ((cmd == "r" || cmd == "reject") && !arg.empty()) {
      r.action = hitl::GateAction::Reject;
      r.guidance_text = arg;
      return r;
    }
    if ((cmd == "g" || cmd == "guidance") && !arg.empty()) {
      r.action = hitl::GateAction::Guidance;
      r.guidance_text = arg;
      return r;
    }
  }
}

pipeline::RunOptions run_options(bool detach, std::optional<int> stop_after) {
  pipeline::RunOptions o;
  o.stop_after_stage = stop_after;
  if (!detach) {
    if (isatty(STDIN_FILENO)) {
      o.on_gate = prompt_gate;
    } else {
      o.wait_for_gates = true;
    }
  }
  return o;
}

int exit_for(const RunState& s) {
  if (s.status == RunStatus::Running) return kOk;
  return pipeline::exit_code_for(s);
}

// --- run / resume ----------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string topic;
  std::string mode;
  std::string domain;
  std::string backend;
  std::string fixture;
  std::string run_id;
  bool detach = false;
  int stop_after = 0;
};

int cmd_run(const Common& c, const RunArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (!a.topic.empty()) cfg.topic = a.topic;
  if (!a.mode.empty()) cfg.mode = a.mode;
  if (!a.domain.empty()) cfg.domain_override = a.domain;
  if (!a.backend.empty()) cfg.backend = a.backend;
  if (!a.fixture.empty()) cfg.fixture = a.fixture;
  if (!a.run_id.empty()) cfg.run_id = a.run_id;
  if (!c.state_root.empty()) cfg.state_root = c.state_root;
  cfg.check();
  const auto svc = load_services(c);
  auto session = pipeline::Session::open(cfg, svc);
  pipeline::Workspace ws(cfg.state_root);
  pipeline::Orchestrator orch(svc, session.deps(), ws.store, ws.gates, ws.events);
  const auto s = orch.start(cfg, run_options(a.detach, a.stop_after > 0 ? std::optional<int>(a.stop_after) : std::nullopt));
  report_run(s, c);
  return exit_for(s);
}

RunState resume_run(const pipeline::Services& svc, const fs::path& state_root, const std::string& run_id,
                    const pipeline::RunOptions& opts) {
  pipeline::Workspace ws(state_root);
  RunConfig cfg = ws.store.config(run_id);
  auto session = pipeline::Session::open(cfg, svc);
  pipeline::Orchestrator orch(svc, session.deps(), ws.store, ws.gates, ws.events);
  return orch.resume(run_id, opts);
}

int cmd_resume(const Common& c, const std::string& run_id, bool detach) {
  pipeline::Workspace ws(c.state_root);
  const auto before = ws.store.load(run_id);
  if (before.status == RunStatus::Completed) {
    if (c.json) {
      auto j = run_summary(before);
      j["notice"] = "already completed";
      print_json(j);
    } else {
      std::cout << fmt::format("run {} already completed; nothing to do\n", run_id);
    }
    return kOk;
  }
  const auto svc = load_services(c);
  const auto s = resume_run(svc, c.state_root, run_id, run_options(detach, std::nullopt));
  report_run(s, c);
  return exit_for(s);
}

int cmd_status(const Common& c, const std::string& run_id) {
  pipeline::Workspace ws(c.state_root);
  const auto s = ws.store.load(run_id);
  report_run(s, c);
  return kOk;
}

// --- gates -----------------------------------------------------------------

int cmd_gates_list(const Common& c, bool all) {
  pipeline::Workspace ws(c.state_root);
  const auto tickets = ws.gates.list(!all);
  if (c.json) {
    Json arr = Json::array();
    for (const auto& t : tickets) arr.push_back(t.to_json());
    print_json({{"tickets", arr}});
    return kOk;
  }
  if (tickets.empty()) std::cout << "no tickets\n";
  for (const auto& t : tickets) {
    std::cout << fmt::format("{}  stage {:2}  {:<10}  {}  {}\n", t.id, t.stage, t.reason, t.opened_at,
                             t.open() ? "open" : hitl::to_string(t.resolution->action));
  }
  return kOk;
}

struct ResolveArgs {
  std::string ticket;
  std::string action;
  std::string payload;
  std::string guidance;
  std::string actor = "cli";
  bool no_resume = false;
  bool wait = false;
};

int cmd_gates_resolve(const Common& c, const ResolveArgs& a) {
  const auto svc = load_services(c);
  pipeline::Workspace ws(c.state_root);
  hitl::Resolution r;
  r.action = hitl::gate_action_from_string(a.action);
  r.actor = a.actor;
  r.guidance_text = a.guidance;
  if (r.action == hitl::GateAction::Edit) {
    if (a.payload.empty()) throw InvalidRequest("edit needs --payload <file>");
    if (!fs::exists(a.payload)) throw NotFound("no payload file " + a.payload);
    r.edited_payload = Json::parse(read_file(a.payload));
  }
  const auto ticket = ws.gates.get(a.ticket);
  RunConfig cfg = ws.store.config(ticket.run_id);
  r.timestamp = format_iso8601(pipeline::Session::open(cfg, svc).clock->now());
  const auto t = ws.gates.resolve(a.ticket, r, svc.contracts);
  if (t.open()) {
    if (c.json) {
      print_json({{"ticket", t.to_json()}, {"validation_report", t.validation_report}});
    } else {
      std::cout << "edit rejected by the stage contract:\n" << t.validation_report.dump(2) << "\n";
    }
    return kUsage;
  }
  if (a.no_resume) {
    if (c.json) print_json({{"ticket", t.to_json()}});
    else std::cout << fmt::format("ticket {} resolved: {}\n", t.id, hitl::to_string(t.resolution->action));
    return kOk;
  }
  const auto s = resume_run(svc, c.state_root, t.run_id, run_options(!a.wait, std::nullopt));
  report_run(s, c);
  return exit_for(s);
}

// --- verify / judge --------------------------------------------------------

int cmd_verify(const Common& c, const std::string& doc_file, const std::string& registry_file,
               const std::string& claims_file) {
  for (const auto& f : {doc_file, registry_file}) {
    if (!fs::exists(f)) throw NotFound("no such file " + f);
  }
  Json doc = Json::parse(read_file(doc_file));
  if (doc.contains("manuscript")) doc = doc["manuscript"];
  const auto reg = verify::VerifiedRegistry::from_json(Json::parse(read_file(registry_file)));
  verify::ClaimConfig claims;
  if (!claims_file.empty()) {
    claims = verify::ClaimConfig::load(claims_file);
  } else {
    claims = load_services(c).claims;
  }
  const auto report = verify::verify_document(doc, reg, claims);
  if (c.json) {
    print_json(report.to_json());
  } else if (report.accepted) {
    std::cout << fmt::format("accepted: {} numeric claims checked\n", report.verdicts.size());
  } else {
    std::cout << "rejected: unverified values in strict sections:";
    for (const auto& v : report.rejected_values) std::cout << " " << v;
    std::cout << "\n";
  }
  return report.accepted ? kOk : kRejected;
}

struct JudgeArgs {
  std::string rubric;
  std::vector<std::string> scores;
  bool timed_out = false;
  bool writing_present = false;
  double threshold = 0.20;
};

int cmd_judge(const Common& c, const JudgeArgs& a) {
  const auto rubric = judge::Rubric::load(a.rubric);
  std::vector<judge::Review> reviews;
  for (const auto& f : a.scores) {
    if (!fs::exists(f)) throw NotFound("no such file " + f);
    reviews.push_back(judge::review_from_json(Json::parse(read_file(f))));
  }
  judge::Review final_review = reviews.front();
  std::vector<std::string> flagged;
  if (reviews.size() >= 2) {
    const auto adj = judge::adjudicate(rubric, reviews[0], reviews[1],
                                       reviews.size() >= 3 ? std::optional<judge::Review>(reviews[2]) : std::nullopt,
                                       a.threshold);
    final_review = adj.final_review;
    flagged = adj.flagged;
  }
  final_review = judge::apply_timeout_rule(rubric, final_review, a.timed_out, a.writing_present);
  const auto score = judge::aggregate(rubric, final_review);
  if (c.json) {
    Json j = score.to_json();
    j["flagged"] = flagged;
    j["scores"] = judge::to_json(final_review);
    print_json(j);
  } else {
    std::cout << fmt::format("overall_strict {:.4f}\nresults_only {:.4f}\n", score.overall_strict, score.results_only);
    if (!flagged.empty()) std::cout << "adjudicated leaves:" << fmt::format(" {}", fmt::join(flagged, " ")) << "\n";
  }
  return kOk;
}

// --- lessons ---------------------------------------------------------------

evolution::DecayParams decay_now(const pipeline::Services& svc) {
  return {svc.settings.half_life_days, SystemClock{}.now()};
}

int cmd_lessons_list(const Common& c, const std::string& category) {
  const auto svc = load_services(c);
  pipeline::Workspace ws(c.state_root);
  evolution::LessonStore store(ws.store.state_dir() / "lessons.journal");
  const auto p = decay_now(svc);
  std::vector<evolution::RankedLesson> ranked;
  for (const auto& l : store.all()) {
    if (!category.empty() && l.category != category) continue;
    ranked.push_back({l, evolution::weight(l, p)});
  }
  evolution::rank(ranked);
  if (c.json) {
    Json arr = Json::array();
    for (const auto& r : ranked) {
      Json j = r.lesson.to_json();
      j["weight"] = r.weight;
      arr.push_back(j);
    }
    print_json({{"lessons", arr}});
    return kOk;
  }
  if (ranked.empty()) std::cout << "no lessons\n";
  for (const auto& r : ranked) {
    std::cout << fmt::format("{}  {:<14} {:.3f}  {}\n", r.lesson.id, r.lesson.category, r.weight, r.lesson.mitigation);
  }
  return kOk;
}

int cmd_lessons_show(const Common& c, const std::string& id) {
  pipeline::Workspace ws(c.state_root);
  evolution::LessonStore store(ws.store.state_dir() / "lessons.journal");
  const auto l = store.find(id);
  if (!l) throw NotFound("no lesson " + id);
  print_json(l->to_json());
  return kOk;
}

int cmd_lessons_prune(const Common& c, double floor) {
  const auto svc = load_services(c);
  pipeline::Workspace ws(c.state_root);
  evolution::LessonStore store(ws.store.state_dir() / "lessons.journal");
  const auto removed = store.prune(decay_now(svc), floor);
  if (c.json) print_json({{"removed", removed}});
  else std::cout << fmt::format("removed {} lessons below weight {}\n", removed, floor);
  return kOk;
}

// --- serve -----------------------------------------------------------------

std::atomic<bool> g_stop{false};

int cmd_serve(const Common& c, const std::string& host, int port) {
  const auto svc = load_services(c);
  pipeline::Workspace ws(c.state_root);
  SystemClock clock;
  std::mutex resume_mu;
  std::mutex workers_mu;
  std::vector<std::thread> workers;
  hitl::ServerOptions opts;
  opts.runs_root = ws.store.runs_root();
  if (const char* token = std::getenv("LABLOOP_API_TOKEN")) opts.token = token;
  const fs::path state_root = c.state_root;
  opts.on_resolved = [&](const hitl::GateTicket& t) {
    std::lock_guard lock(workers_mu);
    workers.emplace_back([&svc, state_root, run_id = t.run_id, &resume_mu] {
      // One resume at a time; each continues until the next gate or the end.
      std::lock_guard inner(resume_mu);
      try {
        resume_run(svc, state_root, run_id, run_options(true, std::nullopt));
      } catch (const std::exception& e) {
        std::cerr << "resume of " << run_id << " failed: " << e.what() << "\n";
      }
    });
  };
  hitl::GateServer server(opts, ws.gates, ws.events, svc.contracts, clock);
  const int bound = server.start(host, port);
  std::cout << fmt::format("gate server on http://{}:{}/api/v1/\n", host, bound) << std::flush;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  std::lock_guard lock(workers_mu);
  for (auto& w : workers) {
    if (w.joinable()) w.join();
  }
  return kOk;
}

int exit_for_error(const std::exception& e) {
  if (dynamic_cast<const NotFound*>(&e)) return kNotFound;
  if (dynamic_cast<const Conflict*>(&e)) return kConflict;
  if (dynamic_cast<const InvalidRequest*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const Json::exception*>(&e)) return kUsage;
  return kInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labloop: staged research pipeline with human gates"};
  app.footer(kExitHelp);
  app.require_subcommand(1);
  Common common;
  common.state_root = ".";
  app.add_option("--state", common.state_root, "State root holding runs/ and state/")->capture_default_str();
  app.add_option("--config-dir", common.config_dir, "Contracts, prompt banks and domain profiles");
  app.add_flag("--json", common.json, "Machine-readable output");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Start a run");
  run_cmd->add_option("--config", run.config, "Run config file (JSON)");
  run_cmd->add_option("--topic", run.topic, "Research topic");
  run_cmd->add_option("--mode", run.mode, "Intervention mode");
  run_cmd->add_option("--domain", run.domain, "Force a domain profile");
  run_cmd->add_option("--backend", run.backend, "scripted or http");
  run_cmd->add_option("--fixture", run.fixture, "Scripted backend fixture");
  run_cmd->add_option("--run-id", run.run_id, "Run id (generated when omitted)");
  run_cmd->add_option("--stop-after", run.stop_after, "Return after committing this stage");
  run_cmd->add_flag("--detach", run.detach, "Exit at the first gate instead of waiting");

  std::string run_id;
  bool detach = false;
  auto* resume_cmd = app.add_subcommand("resume", "Continue a run from its latest checkpoint");
  resume_cmd->add_option("run_id", run_id)->required();
  resume_cmd->add_flag("--detach", detach, "Exit at the next gate instead of waiting");

  auto* status_cmd = app.add_subcommand("status", "Show a run");
  status_cmd->add_option("run_id", run_id)->required();

  auto* gates_cmd = app.add_subcommand("gates", "List or resolve gate tickets");
  gates_cmd->require_subcommand(1);
  bool all_tickets = false;
  auto* gates_list = gates_cmd->add_subcommand("list", "List tickets");
  gates_list->add_flag("--all", all_tickets, "Include resolved tickets");
  ResolveArgs res;
  auto* gates_resolve = gates_cmd->add_subcommand("resolve", "Resolve a ticket and continue its run");
  gates_resolve->add_option("ticket", res.ticket)->required();
  gates_resolve->add_option("action", res.action, "approve, edit, reject or guidance")->required();
  gates_resolve->add_option("--payload", res.payload, "Edited payload file (edit)");
  gates_resolve->add_option("--guidance", res.guidance, "Guidance text (reject, guidance)");
  gates_resolve->add_option("--actor", res.actor)->capture_default_str();
  gates_resolve->add_flag("--no-resume", res.no_resume, "Record the resolution only");
  gates_resolve->add_flag("--wait,!--detach", res.wait, "Wait at the next gate instead of stopping there");

  std::string doc_file, registry_file, claims_file;
  auto* verify_cmd = app.add_subcommand("verify", "Check a manuscript's numbers against a registry");
  verify_cmd->add_option("manuscript", doc_file)->required();
  verify_cmd->add_option("registry", registry_file)->required();
  verify_cmd->add_option("--claims", claims_file, "Claim config file");

  JudgeArgs jargs;
  auto* judge_cmd = app.add_subcommand("judge", "Aggregate rubric scores");
  judge_cmd->add_option("rubric", jargs.rubric)->required()->check(CLI::ExistingFile);
  judge_cmd->add_option("scores", jargs.scores, "One, two, or three review files")->required()->expected(1, 3);
  judge_cmd->add_flag("--timed-out", jargs.timed_out);
  judge_cmd->add_flag("--writing-present", jargs.writing_present);
  judge_cmd->add_option("--threshold", jargs.threshold)->capture_default_str();

  auto* lessons_cmd = app.add_subcommand("lessons", "Inspect the lesson store");
  lessons_cmd->require_subcommand(1);
  std::string category, lesson_id;
  double floor = 0.05;
  auto* lessons_list = lessons_cmd->add_subcommand("list", "Lessons ranked by current weight");
  lessons_list->add_option("--category", category);
  auto* lessons_show = lessons_cmd->add_subcommand("show", "One lesson");
  lessons_show->add_option("id", lesson_id)->required();
  auto* lessons_prune = lessons_cmd->add_subcommand("prune", "Drop lessons below a weight floor");
  lessons_prune->add_option("--floor", floor)->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8765;
  auto* serve_cmd = app.add_subcommand("serve", "Start the gate server (token from LABLOOP_API_TOKEN)");
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(common, run);
    if (*resume_cmd) return cmd_resume(common, run_id, detach);
    if (*status_cmd) return cmd_status(common, run_id);
    if (*gates_list) return cmd_gates_list(common, all_tickets);
    if (*gates_resolve) return cmd_gates_resolve(common, res);
    if (*verify_cmd) return cmd_verify(common, doc_file, registry_file, claims_file);
    if (*judge_cmd) return cmd_judge(common, jargs);
    if (*lessons_list) return cmd_lessons_list(common, category);
    if (*lessons_show) return cmd_lessons_show(common, lesson_id);
    if (*lessons_prune) return cmd_lessons_prune(common, floor);
    if (*serve_cmd) return cmd_serve(common, host, port);
  } catch (const std::exception& e) {
    const int code = exit_for_error(e);
    if (common.json) {
      print_json({{"error", {{"message", e.what()}, {"exit_code", code}}}});
    } else {
      std::cerr << "labloop: " << e.what() << "\n";
    }
    return code;
  }
  return kUsage;
}
