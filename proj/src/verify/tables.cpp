#include "labloop/verify/tables.hpp"

#include <fmt/format.h>

#include "labloop/common/error.hpp"

namespace labloop::verify {

TableSpec TableSpec::from_json(const Json& j) {
  TableSpec t;
  t.id = j.value("id", "main");
  t.caption = j.value("caption", "");
  t.conditions = j.at("conditions").get<std::vector<std::string>>();
  t.metrics = j.at("metrics").get<std::vector<std::string>>();
  t.precision = j.value("precision", 3);
  t.with_std = j.value("with_std", true);
  return t;
}

Json TableSpec::to_json() const {
  return {{"id", id},           {"caption", caption},     {"conditions", conditions},
          {"metrics", metrics}, {"precision", precision}, {"with_std", with_std}};
}

std::string format_fixed(double value, int precision) {
  std::string s = fmt::format("{:.{}f}", value, precision);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string render_verified_table(const VerifiedRegistry& reg, const TableSpec& spec) {
  std::string out = fmt::format("Table {}: {}\n| Condition |", spec.id, spec.caption);
  for (const auto& m : spec.metrics) out += " " + m + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < spec.metrics.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& c : spec.conditions) {
    out += "| " + c + " |";
    for (const auto& m : spec.metrics) {
      const RegistryEntry* e = reg.find(c, m);
      if (!e) {
        throw RenderError(fmt::format("table {} references {} which is not in the registry", spec.id,
                                      registry_key(c, m)),
                          registry_key(c, m));
      }
      out += " " + format_fixed(e->mean, spec.precision);
      if (spec.with_std) out += " ± " + format_fixed(e->stddev, spec.precision);
      out += " |";
    }
    out += "\n";
  }
  return out;
}

std::string render_verified_tables(const VerifiedRegistry& reg, const std::vector<TableSpec>& specs) {
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += "\n";
    out += render_verified_table(reg, specs[i]);
  }
  return out;
}

TableSpec default_table_spec(const VerifiedRegistry& reg, const std::string& id) {
  TableSpec t;
  t.id = id;
  t.caption = "Per-condition means and standard deviations over seeds";
  t.conditions = reg.conditions();
  t.metrics = reg.metrics();
  return t;
}

}  // namespace labloop::verify
