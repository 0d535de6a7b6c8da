#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/agents/domain.hpp"
#include "labloop/agents/prompt_bank.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/contract.hpp"
#include "labloop/core/run_state.hpp"
#include "labloop/core/section_lengths.hpp"
#include "labloop/evolution/lessons.hpp"
#include "labloop/executor/complexity.hpp"
#include "labloop/executor/sandbox.hpp"
#include "labloop/executor/validate.hpp"
#include "labloop/hitl/smartpause.hpp"
#include "labloop/verify/citations.hpp"
#include "labloop/verify/claims.hpp"

namespace labloop::pipeline {

/// Everything an operator chooses for one run.
struct RunConfig {
  std::string topic;
  std::string mode = "FullAuto";
  std::optional<std::string> domain_override;
  std::string backend = "scripted";  // scripted | http
  fs::path fixture;                  // scripted backend fixture
  std::string llm_endpoint;
  std::string llm_model;
  std::string runtime = "fake";  // fake | docker
  std::string network_policy = "setup_only";
  RunBudget budget;
  fs::path state_root = ".";  // holds runs/ and state/
  fs::path config_dir;
  std::string run_id;      // generated when empty
  std::string start_time;  // fixed clock start, ISO-8601; wall clock when empty
  std::string project_name = "labloop";
  double quality_threshold = 7.0;
  std::optional<int> auto_approve_after_s;

  /// Throws InvalidRequest for an unknown mode, backend, runtime or network policy.
  void check() const;
  Json to_json() const;
  static RunConfig from_json(const Json& j);
  static RunConfig load(const fs::path& file);
};

/// Tunables from <config_dir>/labloop.json.
struct Settings {
  executor::ComplexityCaps caps;
  evolution::OverlayPolicy overlays;
  double half_life_days = 30.0;
  std::optional<std::set<int>> thorough_stages;
  hitl::SmartPauseConfig smartpause;
  verify::ResolverEndpoints endpoints;
  executor::ResourceLimits limits;
  std::size_t panel_size = 3;
  int repair_budget = 3;

  static Settings from_json(const Json& j);
};

/// Read-only configuration shared by every run of a process.
struct Services {
  fs::path config_dir;
  ContractSet contracts;
  agents::BankSet banks;
  agents::DomainRegistry domains;
  agents::KeywordRuleset keywords;
  executor::ValidationRuleset rules;
  verify::ClaimConfig claims;
  std::vector<SectionTarget> section_targets;
  Settings settings;

  /// Loads and self-checks contracts, prompt bank parity and the domain set.
  static Services load(const fs::path& config_dir);
};

/// LABLOOP_CONFIG_DIR from the environment, else the build-time default.
fs::path default_config_dir();

}  // namespace labloop::pipeline
