#pragma once

#include <string>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/run_state.hpp"

namespace labloop {

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  std::string run_state;  // canonical serialized RunState
  int schema_version = kCheckpointSchemaVersion;
  std::string content_digest;  // sha256 of run_state

  /// The on-disk document.
  std::string to_bytes() const;
  /// Parses the document without verifying it; resume() verifies.
  static Checkpoint from_bytes(const std::string& bytes);
};

Checkpoint checkpoint(const RunState& state);

/// Throws CorruptCheckpoint on digest mismatch or unreadable content, and
/// ConfigError when the schema version is newer than this build supports.
RunState resume(const Checkpoint& cp);

/// Writes runs/<id>/checkpoints/<seq>.ckpt and latest.ckpt atomically.
void write_checkpoint(const fs::path& run_dir, const Checkpoint& cp, int sequence);
Checkpoint read_latest_checkpoint(const fs::path& run_dir);

}  // namespace labloop
