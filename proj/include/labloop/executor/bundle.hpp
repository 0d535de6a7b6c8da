#pragma once

#include <map>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"

namespace labloop::executor {

struct BlueprintEntry {
  std::string path;
  std::string purpose;
  std::vector<std::string> depends_on;
};

struct CodeBundle {
  std::map<std::string, std::string> files;
  std::vector<BlueprintEntry> blueprint;
  std::string entrypoint;
  std::vector<std::string> declared_conditions;

  /// Empty when the entrypoint exists and every blueprint entry has a file.
  std::vector<std::string> invariant_problems() const;
  Json to_json() const;
  static CodeBundle from_json(const Json& j);
};

}  // namespace labloop::executor
