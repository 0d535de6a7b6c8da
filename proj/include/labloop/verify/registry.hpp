#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/common/json.hpp"

namespace labloop::verify {

/// One harness metrics document together with the id of the execution that produced it.
/// The document holds {"records": [{"condition", "metric", "seed", "value"}, ...]}.
struct MetricsSource {
  std::string result_id;
  Json metrics;
};

struct RegistryEntry {
  std::string condition;
  std::string metric;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over seeds
  std::vector<double> seed_values;
  std::vector<std::string> seeds;
  std::optional<std::string> units;
  std::string provenance;  // result_id

  std::string key() const { return condition + "::" + metric; }
  Json to_json() const;
  static RegistryEntry from_json(const Json& j);
};

std::string registry_key(const std::string& condition, const std::string& metric);

/// Whitelist of measured values. Entries are fixed once written; replacing
/// one requires an explicit supersede().
class VerifiedRegistry {
 public:
  /// Throws Conflict when two distinct results write the same (condition, metric).
  static VerifiedRegistry build(const std::vector<MetricsSource>& results);

  /// Replaces every entry `source` writes and records the superseded provenance.
  void supersede(const MetricsSource& source);

  const RegistryEntry* find(const std::string& condition, const std::string& metric) const;
  const RegistryEntry* find(const std::string& key) const;
  const std::map<std::string, RegistryEntry>& entries() const { return entries_; }
  std::vector<std::string> conditions() const;
  std::vector<std::string> metrics() const;
  bool empty() const { return entries_.empty(); }

  Json to_json() const;
  static VerifiedRegistry from_json(const Json& j);
  std::string digest() const;

 private:
  void absorb(const MetricsSource& source, bool allow_replace);

  std::map<std::string, RegistryEntry> entries_;
  std::vector<std::string> superseded_;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_and_std(const std::vector<double>& xs);

}  // namespace labloop::verify
