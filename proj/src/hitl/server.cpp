#include "labloop/hitl/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

#include "labloop/common/error.hpp"
#include "labloop/core/checkpoint.hpp"

namespace labloop::hitl {

namespace {

Json envelope(Json data) { return {{"api_version", kApiVersion}, {"data", std::move(data)}}; }

Json error_body(const std::string& code, const std::string& message, Json extra = Json::object()) {
  Json e{{"code", code}, {"message", message}};
  for (auto& [k, v] : extra.items()) e[k] = v;
  return {{"api_version", kApiVersion}, {"error", e}};
}

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json run_summary(const RunState& s) {
  return {{"run_id", s.run_id},       {"topic", s.topic},
          {"domain", s.domain},       {"mode", s.mode},
          {"current_stage", s.current_stage}, {"status", to_string(s.status)},
          {"open_ticket", s.open_ticket ? Json(*s.open_ticket) : Json(nullptr)},
          {"interventions", s.interventions},
          {"budget",
           {{"max_pivots", s.budget.max_pivots},
            {"max_refines", s.budget.max_refines},
            {"pivots_used", s.budget.pivots_used},
            {"refines_used", s.budget.refines_used}}},
          {"created_at", s.created_at}, {"updated_at", s.updated_at}};
}

}  // namespace

RunState load_run(const fs::path& runs_root, const std::string& run_id) {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") != std::string::npos) {
    throw NotFound("no run " + run_id);
  }
  const fs::path dir = runs_root / run_id;
  if (!fs::exists(dir / "checkpoints" / "latest.ckpt")) throw NotFound("no run " + run_id);
  return resume(read_latest_checkpoint(dir));
}

std::vector<std::string> list_run_ids(const fs::path& runs_root) {
  std::vector<std::string> ids;
  if (!fs::exists(runs_root)) return ids;
  for (const auto& e : fs::directory_iterator(runs_root)) {
    if (e.is_directory() && fs::exists(e.path() / "checkpoints" / "latest.ckpt")) ids.push_back(e.path().filename());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct GateServer::Worker {
  std::thread thread;
};

GateServer::GateServer(ServerOptions opts, GateService& gates, EventLog& events, const ContractSet& contracts,
                       Clock& clock)
    : opts_(std::move(opts)),
      gates_(gates),
      events_(events),
      contracts_(contracts),
      clock_(clock),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

GateServer::~GateServer() { stop(); }

void GateServer::routes() {
  auto& srv = *server_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (opts_.token.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + opts_.token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send(res, 401, error_body("unauthorized", "missing or wrong bearer token"));
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const NotFound& e) {
      send(res, 404, error_body("not_found", e.what()));
    } catch (const InvalidRequest& e) {
      send(res, 400, error_body("invalid_request", e.what()));
    } catch (const Json::exception& e) {
      send(res, 400, error_body("invalid_request", e.what()));
    } catch (const ConfigError& e) {
      send(res, 404, error_body("not_found", e.what()));
    } catch (const std::exception& e) {
      send(res, 500, error_body("internal", e.what()));
    }
  });

  srv.Get("/api/v1/runs", [this](const httplib::Request&, httplib::Response& res) {
    Json runs = Json::array();
    for (const auto& id : list_run_ids(opts_.runs_root)) runs.push_back(run_summary(load_run(opts_.runs_root, id)));
    send(res, 200, envelope(runs));
  });

  srv.Get(R"(/api/v1/runs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const RunState s = load_run(opts_.runs_root, req.matches[1]);
    Json detail = run_summary(s);
    Json completed = Json::array();
    for (const auto& [stage, _] : s.artifacts) completed.push_back(stage);
    detail["completed_stages"] = completed;
    detail["warnings"] = s.warnings;
    Json tickets = Json::array();
    for (const auto& t : gates_.for_run(s.run_id)) tickets.push_back(t.to_json());
    detail["tickets"] = tickets;
    send(res, 200, envelope(detail));
  });

  srv.Get("/api/v1/tickets", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string status = req.has_param("status") ? req.get_param_value("status") : "open";
    if (status != "open" && status != "all") throw InvalidRequest("status must be open or all");
    Json out = Json::array();
    for (const auto& t : gates_.list(status == "open")) out.push_back(t.to_json());
    send(res, 200, envelope(out));
  });

  srv.Get(R"(/api/v1/tickets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, 200, envelope(gates_.get(req.matches[1]).to_json()));
  });

  srv.Post(R"(/api/v1/tickets/([^/]+)/resolution)", [this](const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw InvalidRequest("body is not a JSON object");
    if (body.value("api_version", 0) != kApiVersion) throw InvalidRequest("unsupported api_version");
    Resolution r = Resolution::from_json(body);
    r.timestamp = format_iso8601(clock_.now());
    if (r.actor.empty()) r.actor = "api";
    GateTicket t;
    try {
      t = gates_.resolve(req.matches[1], r, contracts_);
    } catch (const Conflict& e) {
      send(res, 409, error_body("conflict", e.what(), {{"ticket", gates_.get(req.matches[1]).to_json()}}));
      return;
    }
    if (t.open()) {
      send(res, 422, error_body("contract_violation", "edited payload fails the stage contract",
                                {{"report", t.validation_report}, {"ticket", t.to_json()}}));
      return;
    }
    if (opts_.on_resolved) opts_.on_resolved(t);
    send(res, 200, envelope(t.to_json()));
  });

  srv.Get("/api/v1/events", [this](const httplib::Request& req, httplib::Response& res) {
    const std::int64_t since = req.has_param("since") ? std::stoll(req.get_param_value("since")) : 0;
    int timeout = req.has_param("timeout") ? std::stoi(req.get_param_value("timeout")) : 0;
    timeout = std::clamp(timeout, 0, opts_.max_poll_seconds);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout);
    std::vector<Json> evs = events_.since(since);
    while (evs.empty() && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      evs = events_.since(since);
    }
    const std::int64_t last = evs.empty() ? since : evs.back().value("seq", since);
    send(res, 200, envelope({{"events", evs}, {"last_seq", last}}));
  });

  srv.Get(R"(/api/v1/contracts/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    const int stage = std::stoi(req.matches[1]);
    send(res, 200, envelope(contracts_.get(StageId::of(stage)).to_json()));
  });
}

int GateServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  worker_ = std::make_unique<Worker>();
  worker_->thread = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool GateServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

void GateServer::stop() {
  if (server_) server_->stop();
  if (worker_ && worker_->thread.joinable()) worker_->thread.join();
  worker_.reset();
}

}  // namespace labloop::hitl
