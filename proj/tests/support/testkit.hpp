#pragma once

#include <unistd.h>

#include <atomic>
#include <map>
#include <set>
#include <random>
#include <string>

#include "labloop/common/digest.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/common/text.hpp"
#include "labloop/common/json.hpp"
#include "labloop/pipeline/session.hpp"

namespace testkit {

namespace fs = labloop::fs;
using labloop::Json;

inline fs::path source_dir() { return LABLOOP_SOURCE_DIR; }
inline fs::path config_dir() { return source_dir() / "config"; }
inline fs::path fixture_dir() { return source_dir() / "fixtures"; }
inline fs::path golden_config_file() { return fixture_dir() / "scripted" / "golden.run.json"; }

/// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("labloop-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline const labloop::pipeline::Services& services() {
  static const auto svc = labloop::pipeline::Services::load(config_dir());
  return svc;
}

inline labloop::pipeline::RunConfig golden_config(const fs::path& state_root) {
  auto cfg = labloop::pipeline::RunConfig::load(golden_config_file());
  cfg.state_root = state_root;
  return cfg;
}

/// Everything needed to drive one run in-process.
struct Rig {
  explicit Rig(const labloop::pipeline::RunConfig& cfg)
      : config(cfg),
        session(labloop::pipeline::Session::open(cfg, services())),
        workspace(cfg.state_root),
        orchestrator(services(), session.deps(), workspace.store, workspace.gates, workspace.events) {}

  labloop::pipeline::RunConfig config;
  labloop::pipeline::Session session;
  labloop::pipeline::Workspace workspace;
  labloop::pipeline::Orchestrator orchestrator;
};

/// Relative path -> bytes for every file under `dir`, skipping names in `skip`.
inline std::map<std::string, std::string> snapshot_tree(const fs::path& dir, const std::set<std::string>& skip = {}) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (skip.count(e.path().filename().string())) continue;
    out[fs::relative(e.path(), dir).string()] = labloop::read_file(e.path());
  }
  return out;
}

}  // namespace testkit
