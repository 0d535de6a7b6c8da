#include "labloop/executor/bundle.hpp"

namespace labloop::executor {

std::vector<std::string> CodeBundle::invariant_problems() const {
  std::vector<std::string> problems;
  if (entrypoint.empty() || !files.count(entrypoint)) problems.push_back("entrypoint '" + entrypoint + "' is not in the bundle");
  for (const auto& b : blueprint) {
    if (!files.count(b.path)) problems.push_back("blueprint entry '" + b.path + "' has no file");
  }
  return problems;
}

Json CodeBundle::to_json() const {
  Json bp = Json::array();
  for (const auto& b : blueprint) bp.push_back({{"path", b.path}, {"purpose", b.purpose}, {"depends_on", b.depends_on}});
  return {{"files", files}, {"blueprint", bp}, {"entrypoint", entrypoint}, {"declared_conditions", declared_conditions}};
}

CodeBundle CodeBundle::from_json(const Json& j) {
  CodeBundle b;
  const Json files_doc = j.value("files", Json::object());
  for (const auto& [path, src] : files_doc.items()) {
    b.files[path] = src.is_string() ? src.get<std::string>() : src.dump();
  }
  for (const auto& e : j.value("blueprint", Json::array())) {
    b.blueprint.push_back({e.value("path", ""), e.value("purpose", ""),
                           e.value("depends_on", std::vector<std::string>{})});
  }
  b.entrypoint = j.value("entrypoint", "");
  b.declared_conditions = j.value("declared_conditions", std::vector<std::string>{});
  return b;
}

}  // namespace labloop::executor
