#include "labloop/pipeline/run_store.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "labloop/common/error.hpp"
#include "labloop/core/checkpoint.hpp"

namespace labloop::pipeline {

fs::path RunStore::run_dir(const std::string& run_id) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..") {
    throw NotFound("no run '" + run_id + "'");
  }
  return runs_root() / run_id;
}

bool RunStore::exists(const std::string& run_id) const {
  return fs::exists(run_dir(run_id) / "checkpoints" / "latest.ckpt");
}

std::vector<std::string> RunStore::list() const {
  std::vector<std::string> ids;
  if (!fs::exists(runs_root())) return ids;
  for (const auto& e : fs::directory_iterator(runs_root())) {
    if (e.is_directory() && fs::exists(e.path() / "checkpoints" / "latest.ckpt")) ids.push_back(e.path().filename());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void RunStore::create(const RunState& s, const RunConfig& cfg) {
  const fs::path dir = run_dir(s.run_id);
  if (fs::exists(dir / "checkpoints")) throw Conflict("run " + s.run_id + " already exists");
  fs::create_directories(dir / "checkpoints");
  write_file_atomic(dir / "config.json", cfg.to_json().dump(2));
}

RunConfig RunStore::config(const std::string& run_id) const {
  const fs::path p = run_dir(run_id) / "config.json";
  if (!fs::exists(p)) throw NotFound("no run '" + run_id + "'");
  return RunConfig::from_json(Json::parse(read_file(p)));
}

void RunStore::save(const RunState& s) {
  const fs::path dir = run_dir(s.run_id);
  int seq = 0;
  if (fs::exists(dir / "checkpoints")) {
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
      if (e.path().extension() == ".ckpt" && e.path().stem() != "latest") ++seq;
    }
  }
  write_checkpoint(dir, checkpoint(s), seq + 1);
  Json summary{{"run_id", s.run_id},
               {"topic", s.topic},
               {"domain", s.domain},
               {"mode", s.mode},
               {"status", to_string(s.status)},
               {"current_stage", s.current_stage},
               {"interventions", s.interventions},
               {"updated_at", s.updated_at}};
  write_file_atomic(dir / "run.json", summary.dump(2));
}

RunState RunStore::load(const std::string& run_id) const {
  if (!exists(run_id)) throw NotFound("no run '" + run_id + "'");
  return resume(read_latest_checkpoint(run_dir(run_id)));
}

fs::path RunStore::stage_dir(const RunState& s, int stage) const {
  fs::path p = run_dir(s.run_id) / "stages" / StageId::of(stage).dir_name();
  if (stage >= stages::kHypothesisGen && stage <= stages::kResearchDecision) {
    p /= fmt::format("attempt-{}", s.budget.pivots_used + 1);
    if (stage >= stages::kExperimentRun && s.budget.refines_used > 0) p /= fmt::format("refine-{}", s.budget.refines_used);
  }
  return p;
}

void RunStore::write_stage_file(const RunState& s, int stage, const std::string& name, const std::string& content) const {
  const fs::path p = stage_dir(s, stage) / name;
  fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

void RunStore::write_run_file(const std::string& run_id, const std::string& rel, const std::string& content) const {
  const fs::path p = run_dir(run_id) / rel;
  fs::create_directories(p.parent_path());
  write_file_atomic(p, content);
}

}  // namespace labloop::pipeline
