#include "labloop/pipeline/config.hpp"

#include <cstdlib>

#include "labloop/common/error.hpp"
#include "labloop/hitl/modes.hpp"

namespace labloop::pipeline {

void RunConfig::check() const {
  hitl::mode_from_string(mode);
  if (backend != "scripted" && backend != "http") throw InvalidRequest("unknown backend '" + backend + "' (scripted, http)");
  if (backend == "scripted" && fixture.empty()) throw InvalidRequest("the scripted backend needs a fixture file");
  if (backend == "scripted" && !fs::exists(fixture)) throw InvalidRequest("fixture file not found: " + fixture.string());
  if (backend == "http" && llm_endpoint.empty()) throw InvalidRequest("the http backend needs an endpoint");
  if (runtime != "fake" && runtime != "docker") throw InvalidRequest("unknown runtime '" + runtime + "' (fake, docker)");
  try {
    executor::network_policy_from_string(network_policy);
  } catch (const ConfigError& e) {
    throw InvalidRequest(e.what());
  }
  if (budget.max_pivots < 1 || budget.max_refines < 0) throw InvalidRequest("budgets must be max_pivots >= 1, max_refines >= 0");
  if (run_id.find('/') != std::string::npos || run_id.find("--s") != std::string::npos || run_id == "." || run_id == "..") {
    throw InvalidRequest("run id may not contain '/' or '--s'");
  }
  if (!start_time.empty()) parse_iso8601(start_time);
}

Json RunConfig::to_json() const {
  Json j{{"topic", topic},
         {"mode", mode},
         {"domain", domain_override ? Json(*domain_override) : Json(nullptr)},
         {"backend", backend},
         {"fixture", fixture.string()},
         {"llm_endpoint", llm_endpoint},
         {"llm_model", llm_model},
         {"runtime", runtime},
         {"network_policy", network_policy},
         {"max_pivots", budget.max_pivots},
         {"max_refines", budget.max_refines},
         {"state_root", state_root.string()},
         {"config_dir", config_dir.string()},
         {"run_id", run_id},
         {"start_time", start_time},
         {"project_name", project_name},
         {"quality_threshold", quality_threshold}};
  j["auto_approve_after_s"] = auto_approve_after_s ? Json(*auto_approve_after_s) : Json(nullptr);
  return j;
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  c.topic = j.value("topic", "");
  c.mode = j.value("mode", c.mode);
  if (j.contains("domain") && j["domain"].is_string()) c.domain_override = j["domain"].get<std::string>();
  c.backend = j.value("backend", c.backend);
  c.fixture = j.value("fixture", "");
  c.llm_endpoint = j.value("llm_endpoint", "");
  c.llm_model = j.value("llm_model", "");
  c.runtime = j.value("runtime", c.runtime);
  c.network_policy = j.value("network_policy", c.network_policy);
  c.budget.max_pivots = j.value("max_pivots", c.budget.max_pivots);
  c.budget.max_refines = j.value("max_refines", c.budget.max_refines);
  c.state_root = j.value("state_root", ".");
  c.config_dir = j.value("config_dir", "");
  c.run_id = j.value("run_id", "");
  c.start_time = j.value("start_time", "");
  c.project_name = j.value("project_name", c.project_name);
  c.quality_threshold = j.value("quality_threshold", c.quality_threshold);
  if (j.contains("auto_approve_after_s") && j["auto_approve_after_s"].is_number_integer()) {
    c.auto_approve_after_s = j["auto_approve_after_s"].get<int>();
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& file) {
  if (!fs::exists(file)) throw NotFound("no config file " + file.string());
  const Json j = Json::parse(read_file(file), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidRequest("config file is not a JSON object: " + file.string());
  RunConfig c = from_json(j);
  // Relative paths in a config file resolve against the file's directory.
  const fs::path base = file.parent_path();
  if (!c.fixture.empty() && c.fixture.is_relative()) c.fixture = base / c.fixture;
  if (!c.config_dir.empty() && c.config_dir.is_relative()) c.config_dir = base / c.config_dir;
  return c;
}

Settings Settings::from_json(const Json& j) {
  Settings s;
  if (j.contains("complexity")) s.caps = executor::ComplexityCaps::from_json(j["complexity"]);
  if (j.contains("overlays")) s.overlays = evolution::OverlayPolicy::from_json(j["overlays"]);
  if (j.contains("half_life_days")) {
    s.half_life_days = j["half_life_days"].is_null() ? evolution::DecayParams::kNoDecay : j["half_life_days"].get<double>();
  }
  if (j.contains("thorough_stages") && j["thorough_stages"].is_array()) {
    s.thorough_stages = j["thorough_stages"].get<std::set<int>>();
  }
  if (j.contains("smartpause")) {
    const Json& sp = j["smartpause"];
    s.smartpause.initial_theta = sp.value("initial_theta", s.smartpause.initial_theta);
    s.smartpause.learning_rate = sp.value("learning_rate", s.smartpause.learning_rate);
    s.smartpause.target_approval = sp.value("target_approval", s.smartpause.target_approval);
  }
  if (j.contains("resolvers")) {
    const Json& r = j["resolvers"];
    s.endpoints.crossref = r.value("crossref", s.endpoints.crossref);
    s.endpoints.openalex = r.value("openalex", s.endpoints.openalex);
    s.endpoints.arxiv = r.value("arxiv", s.endpoints.arxiv);
    s.endpoints.semantic_scholar = r.value("semantic_scholar", s.endpoints.semantic_scholar);
    s.endpoints.title_threshold = r.value("title_threshold", s.endpoints.title_threshold);
  }
  if (j.contains("sandbox")) {
    const Json& b = j["sandbox"];
    s.limits.memory_gb = b.value("memory_gb", s.limits.memory_gb);
    s.limits.shm_gb = b.value("shm_gb", s.limits.shm_gb);
    s.limits.wall_clock_s = b.value("wall_clock_s", s.limits.wall_clock_s);
    s.limits.uid = b.value("uid", s.limits.uid);
    s.limits.gid = b.value("gid", s.limits.gid);
    s.limits.image = b.value("image", s.limits.image);
  }
  s.panel_size = j.value("panel_size", s.panel_size);
  s.repair_budget = j.value("repair_budget", s.repair_budget);
  return s;
}

Services Services::load(const fs::path& dir) {
  if (!fs::exists(dir)) throw ConfigError("config directory not found: " + dir.string());
  Services s;
  s.config_dir = dir;
  s.contracts = ContractSet::load_dir(dir / "contracts");
  s.contracts.self_check();
  s.banks = agents::BankSet::load_dir(dir / "prompts");
  const auto parity = agents::bank_parity_check(s.banks.all());
  if (!parity.ok()) {
    const auto& i = parity.issues.front();
    throw ConfigError("prompt bank parity: " + i.bank + " " + i.key + ": " + i.detail);
  }
  s.domains = agents::DomainRegistry::load_dir(dir / "domains");
  s.keywords = agents::KeywordRuleset::load(dir / "domains" / "keywords.rules");
  s.rules = fs::exists(dir / "sandbox" / "rules") ? executor::ValidationRuleset::load(dir / "sandbox" / "rules")
                                                  : executor::ValidationRuleset::defaults();
  s.claims = fs::exists(dir / "verify" / "claims.json") ? verify::ClaimConfig::load(dir / "verify" / "claims.json")
                                                        : verify::ClaimConfig::defaults();
  s.section_targets = fs::exists(dir / "writing" / "section_lengths.json")
                          ? load_section_targets(dir / "writing" / "section_lengths.json")
                          : default_section_targets();
  if (fs::exists(dir / "labloop.json")) s.settings = Settings::from_json(Json::parse(read_file(dir / "labloop.json")));
  return s;
}

fs::path default_config_dir() {
  if (const char* env = std::getenv("LABLOOP_CONFIG_DIR"); env && *env) return env;
#ifdef LABLOOP_CONFIG_DIR
  return LABLOOP_CONFIG_DIR;
#else
  return "config";
#endif
}

}  // namespace labloop::pipeline
