#pragma once

#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/run_state.hpp"
#include "labloop/pipeline/config.hpp"

namespace labloop::pipeline {

/// On-disk layout under <state_root>:
///
///   runs/<id>/config.json, run.json, transcript.jsonl, registry.json
///   runs/<id>/checkpoints/NNNN.ckpt, latest.ckpt
///   runs/<id>/stages/NN-Name/[attempt-<p>/[refine-<r>/]]payload.json
///   runs/<id>/exec/, paper/, tickets/
///   state/lessons.journal, state/events.journal, state/smartpause.json
class RunStore {
 public:
  explicit RunStore(fs::path state_root) : root_(std::move(state_root)) {}

  fs::path runs_root() const { return root_ / "runs"; }
  fs::path state_dir() const { return root_ / "state"; }
  fs::path run_dir(const std::string& run_id) const;
  bool exists(const std::string& run_id) const;
  std::vector<std::string> list() const;

  void create(const RunState& s, const RunConfig& cfg);
  RunConfig config(const std::string& run_id) const;
  /// Writes the next numbered checkpoint and the run.json summary.
  void save(const RunState& s);
  RunState load(const std::string& run_id) const;

  /// Stage directory for the run's current attempt; stages 8..15 are namespaced
  /// by pivot attempt and 12..15 additionally by refine cycle.
  fs::path stage_dir(const RunState& s, int stage) const;
  void write_stage_file(const RunState& s, int stage, const std::string& name, const std::string& content) const;
  void write_run_file(const std::string& run_id, const std::string& rel, const std::string& content) const;

 private:
  fs::path root_;
};

}  // namespace labloop::pipeline
