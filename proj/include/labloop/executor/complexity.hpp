#pragma once

#include <array>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"

namespace labloop::executor {

inline constexpr std::array<const char*, 6> kComplexityDimensions{
    "architectural_depth", "file_count",           "domain_difficulty",
    "dependency_chains",   "historical_failure_rate", "control_flow_complexity"};

/// Normalization caps: a raw count at or above its cap scores 1.
struct ComplexityCaps {
  double architectural_depth = 5;
  double file_count = 12;
  double dependency_chains = 6;
  double control_flow_complexity = 10;
  double tau = 0.6;

  static ComplexityCaps from_json(const Json& j);
};

struct ComplexityScore {
  std::array<double, 6> dimensions{};  // in kComplexityDimensions order, each in [0,1]
  double c = 0.0;
  double tau = 0.6;

  Json to_json() const;
};

/// Equal-weight mean of the six dimensions, rounded to 12 decimals so that
/// sums like (0.2 + 0.4 + 0.6 + 0.8 + 1.0 + 0.6) / 6 land exactly on 0.6.
double complexity_mean(const std::array<double, 6>& dims);

/// Reads stage 9's `plan` object. Each dimension comes either pre-normalized
/// from plan.dimensions.<name> or from a raw count divided by its cap.
/// domain_difficulty may be a number or low/medium/high/extreme.
/// historical_failure_rate defaults to `historical_failure_rate` when absent.
/// Throws StageFailure (E-PLAN-UNPARSEABLE) when the plan is not an object.
ComplexityScore score_complexity(const Json& plan, const ComplexityCaps& caps, double historical_failure_rate = 0.0);

enum class GeneratorTier { ExternalCoder, BuiltinMultiphase, LegacySingleShot };
std::string to_string(GeneratorTier t);

/// c > tau goes to the external coder; c <= tau to the built-in multi-phase generator.
GeneratorTier select_generator(const ComplexityScore& score);

/// The cascade from `first` downwards: external, builtin, legacy.
std::vector<GeneratorTier> tier_cascade(GeneratorTier first);

}  // namespace labloop::executor
