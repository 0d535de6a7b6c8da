#include "labloop/core/checkpoint.hpp"

#include <fmt/format.h>

#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"

namespace labloop {

std::string Checkpoint::to_bytes() const {
  // run_state is embedded as a string so the digest covers the exact bytes.
  Json doc{{"schema_version", schema_version}, {"content_digest", content_digest}, {"run_state", run_state}};
  return doc.dump(1) + "\n";
}

Checkpoint Checkpoint::from_bytes(const std::string& bytes) {
  Json doc;
  try {
    doc = Json::parse(bytes);
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint is not a valid document: ") + e.what());
  }
  Checkpoint cp;
  try {
    cp.schema_version = doc.at("schema_version").get<int>();
    cp.content_digest = doc.at("content_digest").get<std::string>();
    cp.run_state = doc.at("run_state").get<std::string>();
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint missing fields: ") + e.what());
  }
  return cp;
}

Checkpoint checkpoint(const RunState& state) {
  Checkpoint cp;
  cp.run_state = state.to_json().dump();
  cp.content_digest = sha256_hex(cp.run_state);
  return cp;
}

RunState resume(const Checkpoint& cp) {
  if (cp.schema_version > kCheckpointSchemaVersion) {
    throw ConfigError(fmt::format("checkpoint schema {} is newer than supported {}", cp.schema_version,
                                  kCheckpointSchemaVersion));
  }
  if (sha256_hex(cp.run_state) != cp.content_digest) {
    throw CorruptCheckpoint("checkpoint digest mismatch");
  }
  Json j;
  try {
    j = Json::parse(cp.run_state);
  } catch (const Json::exception& e) {
    throw CorruptCheckpoint(std::string("run state unreadable: ") + e.what());
  }
  return RunState::from_json(j);
}

void write_checkpoint(const fs::path& run_dir, const Checkpoint& cp, int sequence) {
  const auto dir = run_dir / "checkpoints";
  const auto bytes = cp.to_bytes();
  write_file_atomic(dir / fmt::format("{:04}.ckpt", sequence), bytes);
  write_file_atomic(dir / "latest.ckpt", bytes);
}

Checkpoint read_latest_checkpoint(const fs::path& run_dir) {
  const auto path = run_dir / "checkpoints" / "latest.ckpt";
  if (!fs::exists(path)) throw NotFound("no checkpoint for run at " + run_dir.string());
  return Checkpoint::from_bytes(read_file(path));
}

}  // namespace labloop
