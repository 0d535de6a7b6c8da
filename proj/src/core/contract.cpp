#include "labloop/core/contract.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop {
namespace {

FieldType parse_type(const std::string& t) {
  if (t == "string") return FieldType::String;
  if (t == "number") return FieldType::Number;
  if (t == "integer") return FieldType::Integer;
  if (t == "boolean") return FieldType::Boolean;
  if (t == "array") return FieldType::Array;
  if (t == "object") return FieldType::Object;
  if (t == "any") return FieldType::Any;
  throw ConfigError("unknown field type: " + t);
}

const char* type_name(FieldType t) {
  switch (t) {
    case FieldType::String: return "string";
    case FieldType::Number: return "number";
    case FieldType::Integer: return "integer";
    case FieldType::Boolean: return "boolean";
    case FieldType::Array: return "array";
    case FieldType::Object: return "object";
    case FieldType::Any: return "any";
  }
  return "any";
}

bool type_matches(FieldType t, const Json& v) {
  switch (t) {
    case FieldType::String: return v.is_string();
    case FieldType::Number: return v.is_number();
    case FieldType::Integer: return v.is_number_integer();
    case FieldType::Boolean: return v.is_boolean();
    case FieldType::Array: return v.is_array();
    case FieldType::Object: return v.is_object();
    case FieldType::Any: return true;
  }
  return false;
}

FieldSpec parse_field(const Json& j) {
  FieldSpec f;
  f.name = j.at("name").get<std::string>();
  f.type = parse_type(j.value("type", "any"));
  f.required = j.value("required", true);
  if (j.contains("rule")) f.rule = j.at("rule");
  if (j.contains("source")) f.source_stage = j.at("source").get<int>();
  return f;
}

Json field_to_json(const FieldSpec& f) {
  Json j{{"name", f.name}, {"type", type_name(f.type)}, {"required", f.required}};
  if (!f.rule.empty()) j["rule"] = f.rule;
  if (f.source_stage) j["source"] = *f.source_stage;
  return j;
}

bool is_blank(const Json& v) {
  if (v.is_null()) return true;
  if (v.is_string()) return text::trim(v.get<std::string>()).empty();
  if (v.is_array() || v.is_object()) return v.empty();
  return false;
}

// Resolves a dotted path ("manuscript.sections") inside the payload.
const Json* lookup(const Json& payload, const std::string& path) {
  const Json* cur = &payload;
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return cur;
}

void check_rule(const FieldSpec& f, const Json& v, const std::string& ns,
                std::vector<ValidationFailure>& out) {
  const Json& r = f.rule;
  auto fail = [&](const std::string& msg) { out.push_back({ns + "RULE", f.name, msg}); };
  if (v.is_array()) {
    if (r.contains("min_items") && v.size() < r["min_items"].get<std::size_t>()) {
      fail(fmt::format("{} has {} items, needs at least {}", f.name, v.size(),
                       r["min_items"].get<std::size_t>()));
    }
    if (r.contains("max_items") && v.size() > r["max_items"].get<std::size_t>()) {
      fail(fmt::format("{} has {} items, allows at most {}", f.name, v.size(),
                       r["max_items"].get<std::size_t>()));
    }
  }
  if (v.is_number()) {
    double x = v.get<double>();
    if (r.contains("min") && x < r["min"].get<double>()) fail(fmt::format("{} below minimum", f.name));
    if (r.contains("max") && x > r["max"].get<double>()) fail(fmt::format("{} above maximum", f.name));
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (r.contains("min_length") && s.size() < r["min_length"].get<std::size_t>()) {
      fail(fmt::format("{} shorter than {}", f.name, r["min_length"].get<std::size_t>()));
    }
    if (r.contains("enum")) {
      const auto& allowed = r["enum"];
      if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
        fail(fmt::format("{} = '{}' not in {}", f.name, s, allowed.dump()));
      }
    }
  }
}

// Returns an empty string when the criterion holds, otherwise a reason.
std::string evaluate(const Json& check, const Json& payload) {
  const std::string kind = check.at("kind").get<std::string>();
  const std::string path = check.value("path", "");
  const Json* target = path.empty() ? &payload : lookup(payload, path);
  if (kind == "count_where") {
    if (!target || !target->is_array()) return path + " is not a list";
    const std::string field = check.at("field").get<std::string>();
    const Json& want = check.at("equals");
    std::size_t n = 0;
    for (const auto& item : *target) {
      if (item.is_object() && item.contains(field) && item[field] == want) ++n;
    }
    std::size_t min = check.value("min", std::size_t{0});
    if (n < min) return fmt::format("{} entries of {} satisfy {}={}, need {}", n, path, field, want.dump(), min);
    return {};
  }
  if (kind == "each_nonempty") {
    if (!target || !target->is_array()) return path + " is not a list";
    std::size_t idx = 0;
    for (const auto& item : *target) {
      for (const auto& fld : check.at("fields")) {
        const auto name = fld.get<std::string>();
        if (!item.is_object() || !item.contains(name) || is_blank(item[name])) {
          return fmt::format("{}[{}] lacks {}", path, idx, name);
        }
      }
      ++idx;
    }
    return {};
  }
  if (kind == "nonempty") {
    if (!target || is_blank(*target)) return path + " is empty";
    return {};
  }
  if (kind == "min_items") {
    if (!target || !target->is_array()) return path + " is not a list";
    std::size_t min = check.at("min").get<std::size_t>();
    if (target->size() < min) return fmt::format("{} has {} items, need {}", path, target->size(), min);
    return {};
  }
  if (kind == "each_has_key") {
    if (!target || !target->is_array()) return path + " is not a list";
    const auto key = check.at("field").get<std::string>();
    for (const auto& item : *target) {
      if (!item.is_object() || !item.contains(key)) return fmt::format("{} entry lacks {}", path, key);
    }
    return {};
  }
  throw ConfigError("unknown acceptance criterion kind: " + kind);
}

}  // namespace

StageContract StageContract::from_json(const Json& doc) {
  StageContract c;
  c.stage = doc.at("stage").get<int>();
  StageId::of(c.stage);
  if (doc.contains("name") && doc["name"].get<std::string>() != StageId::of(c.stage).name()) {
    throw ConfigError(fmt::format("contract for stage {} names '{}'", c.stage, doc["name"].get<std::string>()));
  }
  c.error_namespace = doc.at("error_namespace").get<std::string>();
  for (const auto& f : doc.value("input", Json::array())) c.input_schema.push_back(parse_field(f));
  for (const auto& f : doc.value("output", Json::array())) c.output_schema.push_back(parse_field(f));
  for (const auto& a : doc.value("acceptance", Json::array())) {
    AcceptanceCriterion crit;
    crit.id = a.at("id").get<std::string>();
    crit.code = a.value("code", crit.id);
    crit.description = a.value("description", "");
    crit.check = a.at("check");
    c.acceptance_criteria.push_back(std::move(crit));
  }
  return c;
}

Json StageContract::to_json() const {
  Json j{{"stage", stage},
         {"name", std::string(StageId::of(stage).name())},
         {"error_namespace", error_namespace},
         {"input", Json::array()},
         {"output", Json::array()},
         {"acceptance", Json::array()}};
  for (const auto& f : input_schema) j["input"].push_back(field_to_json(f));
  for (const auto& f : output_schema) j["output"].push_back(field_to_json(f));
  for (const auto& a : acceptance_criteria) {
    j["acceptance"].push_back(
        {{"id", a.id}, {"code", a.code}, {"description", a.description}, {"check", a.check}});
  }
  return j;
}

Json ValidationReport::to_json() const {
  Json j{{"stage", stage}, {"ok", ok()}, {"failures", Json::array()}};
  for (const auto& f : failures) {
    j["failures"].push_back({{"code", f.code}, {"field", f.field}, {"message", f.message}});
  }
  return j;
}

ValidationReport validate_against(const StageContract& contract, const Json& payload) {
  ValidationReport report;
  report.stage = contract.stage;
  const std::string& ns = contract.error_namespace;
  const bool is_object = payload.is_object();
  for (const auto& f : contract.output_schema) {
    if (!is_object || !payload.contains(f.name) || payload[f.name].is_null()) {
      if (f.required) report.failures.push_back({ns + "REQUIRED", f.name, "missing required field " + f.name});
      continue;
    }
    const Json& v = payload[f.name];
    if (!type_matches(f.type, v)) {
      report.failures.push_back({ns + "TYPE", f.name, fmt::format("{} must be {}", f.name, type_name(f.type))});
      continue;
    }
    check_rule(f, v, ns, report.failures);
  }
  // Criteria only make sense once the shape is right.
  if (!report.ok()) return report;
  for (const auto& crit : contract.acceptance_criteria) {
    std::string reason = evaluate(crit.check, payload);
    if (!reason.empty()) report.failures.push_back({ns + crit.code, crit.id, reason});
  }
  return report;
}

ContractSet ContractSet::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("contract directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".schema") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StageContract> contracts;
  for (const auto& p : files) {
    try {
      contracts.push_back(StageContract::from_json(Json::parse(read_file(p))));
    } catch (const Json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
  }
  return from_contracts(std::move(contracts));
}

ContractSet ContractSet::from_contracts(std::vector<StageContract> contracts) {
  ContractSet set;
  for (auto& c : contracts) {
    int ord = c.stage;
    if (!set.contracts_.emplace(ord, std::move(c)).second) {
      throw ConfigError(fmt::format("stage {} has more than one contract", ord));
    }
  }
  return set;
}

const StageContract& ContractSet::get(StageId stage) const {
  auto it = contracts_.find(stage.ordinal());
  if (it == contracts_.end()) throw ConfigError(fmt::format("no contract for stage {}", stage.ordinal()));
  return it->second;
}

std::vector<int> ContractSet::missing() const {
  std::vector<int> out;
  for (int i = 1; i <= StageId::kCount; ++i) {
    if (!contracts_.count(i)) out.push_back(i);
  }
  return out;
}

void ContractSet::self_check() const {
  auto gaps = missing();
  if (!gaps.empty()) {
    std::vector<std::string> s;
    for (int g : gaps) s.push_back(std::to_string(g));
    throw ConfigError("stages without contracts: " + text::join(s, ", "));
  }
}

ValidationReport ContractSet::validate_payload(StageId stage, const Json& payload) const {
  return validate_against(get(stage), payload);
}

}  // namespace labloop
