#include "labloop/verify/registry.hpp"

#include <cmath>
#include <fmt/format.h>
#include <set>

#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"

namespace labloop::verify {

std::string registry_key(const std::string& condition, const std::string& metric) {
  return condition + "::" + metric;
}

std::pair<double, double> mean_and_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

Json RegistryEntry::to_json() const {
  Json j{{"condition", condition}, {"metric", metric},         {"mean", mean},
         {"std", stddev},          {"seed_values", seed_values}, {"seeds", seeds},
         {"provenance", provenance}};
  if (units) j["units"] = *units;
  return j;
}

RegistryEntry RegistryEntry::from_json(const Json& j) {
  RegistryEntry e;
  e.condition = j.at("condition").get<std::string>();
  e.metric = j.at("metric").get<std::string>();
  e.mean = j.at("mean").get<double>();
  e.stddev = j.at("std").get<double>();
  e.seed_values = j.value("seed_values", std::vector<double>{});
  e.seeds = j.value("seeds", std::vector<std::string>{});
  if (j.contains("units")) e.units = j["units"].get<std::string>();
  e.provenance = j.value("provenance", "");
  return e;
}

namespace {

std::string seed_label(const Json& seed) {
  if (seed.is_string()) return seed.get<std::string>();
  return seed.dump();
}

}  // namespace

void VerifiedRegistry::absorb(const MetricsSource& source, bool allow_replace) {
  std::map<std::string, RegistryEntry> fresh;
  for (const auto& rec : source.metrics.value("records", Json::array())) {
    if (!rec.contains("condition") || !rec.contains("metric") || !rec.contains("value") ||
        !rec["value"].is_number()) {
      throw Error(fmt::format("malformed metrics record in {}: {}", source.result_id, rec.dump()));
    }
    RegistryEntry& e = fresh[registry_key(rec["condition"], rec["metric"])];
    e.condition = rec["condition"].get<std::string>();
    e.metric = rec["metric"].get<std::string>();
    e.seed_values.push_back(rec["value"].get<double>());
    e.seeds.push_back(seed_label(rec.value("seed", Json(e.seeds.size()))));
    if (rec.contains("units")) e.units = rec["units"].get<std::string>();
    e.provenance = source.result_id;
  }
  for (auto& [key, e] : fresh) {
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      if (!allow_replace) {
        throw Conflict(fmt::format("registry key {} already written by {}; supersede explicitly", key,
                                   it->second.provenance));
      }
      superseded_.push_back(it->second.provenance + ":" + key);
    }
    std::tie(e.mean, e.stddev) = mean_and_std(e.seed_values);
    entries_[key] = std::move(e);
  }
}

VerifiedRegistry VerifiedRegistry::build(const std::vector<MetricsSource>& results) {
  VerifiedRegistry reg;
  for (const auto& r : results) reg.absorb(r, false);
  return reg;
}

void VerifiedRegistry::supersede(const MetricsSource& source) { absorb(source, true); }

const RegistryEntry* VerifiedRegistry::find(const std::string& condition, const std::string& metric) const {
  return find(registry_key(condition, metric));
}

const RegistryEntry* VerifiedRegistry::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> VerifiedRegistry::conditions() const {
  std::set<std::string> s;
  for (const auto& [_, e] : entries_) s.insert(e.condition);
  return {s.begin(), s.end()};
}

std::vector<std::string> VerifiedRegistry::metrics() const {
  std::set<std::string> s;
  for (const auto& [_, e] : entries_) s.insert(e.metric);
  return {s.begin(), s.end()};
}

Json VerifiedRegistry::to_json() const {
  Json entries = Json::object();
  for (const auto& [key, e] : entries_) entries[key] = e.to_json();
  return {{"std_convention", "population"}, {"entries", entries}, {"superseded", superseded_}};
}

VerifiedRegistry VerifiedRegistry::from_json(const Json& j) {
  VerifiedRegistry reg;
  const Json entries_doc = j.value("entries", Json::object());
  for (const auto& [key, e] : entries_doc.items()) {
    reg.entries_[key] = RegistryEntry::from_json(e);
  }
  reg.superseded_ = j.value("superseded", std::vector<std::string>{});
  return reg;
}

std::string VerifiedRegistry::digest() const { return sha256_hex(to_json().dump()); }

}  // namespace labloop::verify
