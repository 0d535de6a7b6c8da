#include "labloop/executor/repair.hpp"

#include <algorithm>
#include <cmath>

#include "labloop/common/error.hpp"

namespace labloop::executor {

Json RepairBudget::to_json() const { return {{"remaining", remaining}, {"seen", seen}}; }

std::vector<std::string> offending_files(const FailureSignature& sig, const CodeBundle& bundle) {
  std::vector<std::string> out;
  for (const auto& [path, _] : bundle.files) {
    if (sig.excerpt.find(path) != std::string::npos) out.push_back(path);
  }
  if (out.empty() && !bundle.entrypoint.empty()) out.push_back(bundle.entrypoint);
  return out;
}

CodeBundle apply_patch(const CodeBundle& bundle, const Json& patch) {
  CodeBundle out = bundle;
  const Json files_doc = patch.value("files", Json::object());
  for (const auto& [path, src] : files_doc.items()) {
    out.files[path] = src.is_string() ? src.get<std::string>() : src.dump();
  }
  return out;
}

RepairOutcome repair(const FailureSignature& sig, const CodeBundle& bundle, RepairBudget& budget,
                     const RepairContext& ctx) {
  RepairOutcome out;
  if (budget.remaining <= 0) {
    out.exhausted = true;
    return out;
  }
  out.repeated = budget.seen.count(sig.fingerprint) != 0;
  out.cost = out.repeated ? 2 : 1;
  budget.remaining = std::max(0, budget.remaining - out.cost);
  budget.seen.insert(sig.fingerprint);

  Json files = Json::object();
  for (const auto& path : offending_files(sig, bundle)) files[path] = bundle.files.at(path);
  const auto prompt = agents::render_subprompt(
      *ctx.bank, "code_repair", {{"failure", sig.to_json().dump(2)}, {"files", files.dump(2)}}, ctx.overlays);
  const auto resp = agents::call_agent(*ctx.backend, {"stage13/repair", prompt}, ctx.transcript);
  out.patched = apply_patch(bundle, resp.structured);
  out.validation = validate_code(*out.patched, ctx.rules ? *ctx.rules : ValidationRuleset::defaults());
  return out;
}

std::string to_string(DegenerateVerdict v) {
  switch (v) {
    case DegenerateVerdict::Degenerate: return "degenerate";
    case DegenerateVerdict::NotDegenerate: return "not_degenerate";
    case DegenerateVerdict::NotApplicable: return "not_applicable";
  }
  return "not_applicable";
}

DegenerateVerdict degenerate_metrics_check(const std::map<std::string, std::map<std::string, double>>& metrics,
                                           const std::string& primary_metric) {
  std::vector<double> values;
  for (const auto& [cond, per_metric] : metrics) {
    auto it = per_metric.find(primary_metric);
    if (it != per_metric.end()) values.push_back(it->second);
  }
  if (values.size() < 2) return DegenerateVerdict::NotApplicable;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo == 0.0 ? DegenerateVerdict::Degenerate : DegenerateVerdict::NotDegenerate;
}

std::map<std::string, std::map<std::string, double>> condition_means(const Json& doc) {
  std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
  for (const auto& r : doc.value("records", Json::array())) {
    auto& cell = acc[r.value("condition", "")][r.value("metric", "")];
    cell.first += r.value("value", 0.0);
    cell.second += 1;
  }
  std::map<std::string, std::map<std::string, double>> out;
  for (const auto& [c, m] : acc) {
    for (const auto& [metric, sum] : m) out[c][metric] = sum.first / sum.second;
  }
  return out;
}

}  // namespace labloop::executor
