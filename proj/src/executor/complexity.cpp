#include "labloop/executor/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "labloop/common/error.hpp"

namespace labloop::executor {

ComplexityCaps ComplexityCaps::from_json(const Json& j) {
  ComplexityCaps c;
  c.architectural_depth = j.value("architectural_depth", c.architectural_depth);
  c.file_count = j.value("file_count", c.file_count);
  c.dependency_chains = j.value("dependency_chains", c.dependency_chains);
  c.control_flow_complexity = j.value("control_flow_complexity", c.control_flow_complexity);
  c.tau = j.value("tau", c.tau);
  return c;
}

Json ComplexityScore::to_json() const {
  Json dims = Json::object();
  for (std::size_t i = 0; i < dimensions.size(); ++i) dims[kComplexityDimensions[i]] = dimensions[i];
  return {{"dimensions", dims}, {"c", c}, {"tau", tau}};
}

double complexity_mean(const std::array<double, 6>& dims) {
  double sum = 0.0;
  for (double d : dims) sum += d;
  return std::round(sum / 6.0 * 1e12) / 1e12;
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double difficulty(const Json& v) {
  if (v.is_number()) return clamp01(v.get<double>());
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "low") return 0.25;
    if (s == "medium") return 0.5;
    if (s == "high") return 0.75;
    if (s == "extreme") return 1.0;
  }
  throw StageFailure("domain_difficulty must be a number or low/medium/high/extreme", "E-PLAN-DIFFICULTY");
}

double ratio(const Json& plan, const char* key, double cap) {
  const Json& v = plan.at(key);
  if (!v.is_number()) throw StageFailure(std::string(key) + " must be numeric", "E-PLAN-TYPE");
  return cap <= 0 ? 0.0 : clamp01(v.get<double>() / cap);
}

}  // namespace

ComplexityScore score_complexity(const Json& plan, const ComplexityCaps& caps, double historical_failure_rate) {
  if (!plan.is_object()) throw StageFailure("experiment plan is not a structured object", "E-PLAN-UNPARSEABLE");
  ComplexityScore s;
  s.tau = caps.tau;
  const Json dims = plan.value("dimensions", Json::object());
  const double raw_caps[6] = {caps.architectural_depth, caps.file_count, 0, caps.dependency_chains, 0,
                              caps.control_flow_complexity};
  for (std::size_t i = 0; i < 6; ++i) {
    const char* name = kComplexityDimensions[i];
    if (dims.contains(name)) {
      if (!dims[name].is_number()) throw StageFailure(std::string(name) + " must be numeric", "E-PLAN-TYPE");
      s.dimensions[i] = clamp01(dims[name].get<double>());
    } else if (i == 2) {
      s.dimensions[i] = plan.contains(name) ? difficulty(plan[name]) : 0.0;
    } else if (i == 4) {
      s.dimensions[i] = plan.contains(name) ? clamp01(plan[name].get<double>()) : clamp01(historical_failure_rate);
    } else {
      s.dimensions[i] = plan.contains(name) ? ratio(plan, name, raw_caps[i]) : 0.0;
    }
  }
  s.c = complexity_mean(s.dimensions);
  return s;
}

std::string to_string(GeneratorTier t) {
  switch (t) {
    case GeneratorTier::ExternalCoder: return "external_coder";
    case GeneratorTier::BuiltinMultiphase: return "builtin_multiphase";
    case GeneratorTier::LegacySingleShot: return "legacy_single_shot";
  }
  return "legacy_single_shot";
}

GeneratorTier select_generator(const ComplexityScore& score) {
  return score.c > score.tau ? GeneratorTier::ExternalCoder : GeneratorTier::BuiltinMultiphase;
}

std::vector<GeneratorTier> tier_cascade(GeneratorTier first) {
  std::vector<GeneratorTier> all{GeneratorTier::ExternalCoder, GeneratorTier::BuiltinMultiphase,
                                 GeneratorTier::LegacySingleShot};
  return {std::find(all.begin(), all.end(), first), all.end()};
}

}  // namespace labloop::executor
