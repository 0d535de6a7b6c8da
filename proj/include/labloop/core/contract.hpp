#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/stage.hpp"

namespace labloop {

enum class FieldType { String, Number, Integer, Boolean, Array, Object, Any };

struct FieldSpec {
  std::string name;
  FieldType type = FieldType::Any;
  bool required = true;
  /// Optional validation rule: min_items, max_items, min, max, min_length, enum.
  Json rule = Json::object();
  /// For input fields: the upstream stage whose artifact provides the value.
  std::optional<int> source_stage;
};

/// Machine-checkable predicate over an output payload.
struct AcceptanceCriterion {
  std::string id;
  std::string code;         // appended to the stage's error namespace
  std::string description;  // human text, e.g. "at least 2 hypotheses marked falsifiable"
  Json check;               // {"kind": ..., ...}
};

struct StageContract {
  int stage = 0;
  std::string error_namespace;  // e.g. "E-HYPO-"
  std::vector<FieldSpec> input_schema;
  std::vector<FieldSpec> output_schema;
  std::vector<AcceptanceCriterion> acceptance_criteria;

  static StageContract from_json(const Json& doc);
  Json to_json() const;
};

struct ValidationFailure {
  std::string code;
  std::string field;  // field path or criterion id
  std::string message;
};

struct ValidationReport {
  int stage = 0;
  std::vector<ValidationFailure> failures;

  bool ok() const { return failures.empty(); }
  Json to_json() const;
};

/// All 23 contracts, loaded from `config/contracts/*.schema`.
class ContractSet {
 public:
  static ContractSet load_dir(const fs::path& dir);
  static ContractSet from_contracts(std::vector<StageContract> contracts);

  /// Throws ConfigError when the stage has no contract.
  const StageContract& get(StageId stage) const;
  bool has(int ordinal) const { return contracts_.count(ordinal) != 0; }
  /// Ordinals in 1..23 with no contract; the startup self-check requires this to be empty.
  std::vector<int> missing() const;
  void self_check() const;

  ValidationReport validate_payload(StageId stage, const Json& payload) const;

 private:
  std::map<int, StageContract> contracts_;
};

ValidationReport validate_against(const StageContract& contract, const Json& payload);

}  // namespace labloop
