#pragma once

#include <string>
#include <vector>

#include "labloop/common/json.hpp"
#include "labloop/verify/registry.hpp"

namespace labloop::verify {

/// Conditions x metrics layout. Every cell names the registry key
/// "<condition>::<metric>".
struct TableSpec {
  std::string id;
  std::string caption;
  std::vector<std::string> conditions;
  std::vector<std::string> metrics;
  int precision = 3;
  bool with_std = true;

  static TableSpec from_json(const Json& j);
  Json to_json() const;
};

/// Fixed-precision decimal, the same formatting the claim checker applies.
std::string format_fixed(double value, int precision);

/// Pipe table whose cells read "0.500 ± 0.100". Throws RenderError naming the
/// first registry key the table references but the registry lacks.
std::string render_verified_table(const VerifiedRegistry& reg, const TableSpec& spec);
std::string render_verified_tables(const VerifiedRegistry& reg, const std::vector<TableSpec>& specs);

/// One table over every condition and metric in the registry.
TableSpec default_table_spec(const VerifiedRegistry& reg, const std::string& id = "main");

}  // namespace labloop::verify
