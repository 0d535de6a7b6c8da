#include "labloop/pipeline/session.hpp"

#include <cstdlib>

#include "labloop/common/error.hpp"
#include "labloop/common/fs.hpp"

namespace labloop::pipeline {

Deps Session::deps() const {
  return {backend.get(), nullptr, citations.get(), runtime.get(), clock.get()};
}

Session Session::open(const RunConfig& cfg, const Services& svc) {
  Session s;
  if (cfg.backend == "scripted") {
    if (cfg.fixture.empty() || !fs::exists(cfg.fixture)) {
      throw ConfigError("scripted backend needs an existing fixture file, got '" + cfg.fixture.string() + "'");
    }
    const Json doc = Json::parse(read_file(cfg.fixture));
    s.backend = std::make_unique<agents::ScriptedBackend>(doc);
    s.citations = std::make_unique<net::FixtureTransport>(doc.value("http_fixtures", Json::object()));
  } else {
    agents::HttpLlmConfig hc;
    hc.endpoint = cfg.llm_endpoint;
    hc.model = cfg.llm_model;
    if (const char* key = std::getenv("LABLOOP_LLM_API_KEY")) hc.api_key = key;
    s.llm_transport = std::make_shared<net::HttpTransport>();
    s.backend = std::make_unique<agents::HttpLlmBackend>("http", hc, s.llm_transport);
    s.citations = std::make_unique<net::HttpTransport>(std::chrono::milliseconds{1000});
  }
  if (cfg.runtime == "fake") {
    s.runtime = std::make_unique<executor::FakeRuntime>();
  } else if (cfg.runtime == "docker") {
    s.runner = std::make_unique<executor::ProcessRunner>();
    s.runtime = std::make_unique<executor::DockerRuntime>(*s.runner, svc.config_dir / "sandbox" / "harness.py");
  } else {
    throw ConfigError("unknown runtime '" + cfg.runtime + "'");
  }
  if (cfg.start_time.empty()) {
    s.clock = std::make_unique<SystemClock>();
  } else {
    s.clock = std::make_unique<ManualClock>(parse_iso8601(cfg.start_time));
  }
  return s;
}

}  // namespace labloop::pipeline
