#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/verify/registry.hpp"

namespace labloop::verify {

struct ClaimConfig {
  std::set<std::string> strict_sections{"abstract", "results", "experiments"};
  int year_min = 1900;
  int year_max = 2099;
  /// A number right after one of these words is a reference, not a measurement.
  std::set<std::string> reference_words;
  /// An integer right before one of these words is a count ("5 seeds").
  std::set<std::string> count_nouns;
  std::string placeholder = "[UNVERIFIED]";

  static ClaimConfig defaults();
  static ClaimConfig load(const fs::path& file);
  bool is_strict(const std::string& section_name) const;
};

struct NumericClaim {
  std::string printed;  // as written, without sign or percent
  double value = 0.0;
  int decimals = 0;
  bool percent = false;
  bool negative = false;
  std::string section;
  bool strict = false;
  std::optional<std::string> condition_scope;
  std::string context;
  std::size_t offset = 0;  // byte offset of the token in the section text
  std::size_t length = 0;  // token length including sign and percent

  Json to_json() const;
};

enum class ClaimStatus { Matched, PlaceholderSubstituted, Reject };
std::string to_string(ClaimStatus s);

struct ClaimVerdict {
  NumericClaim claim;
  ClaimStatus status = ClaimStatus::Reject;
  std::optional<std::string> matched_entry;

  Json to_json() const;
};

struct DocumentVerification {
  std::vector<ClaimVerdict> verdicts;
  bool accepted = true;
  std::vector<std::string> rejected_values;
  Json manuscript;  // input with non-strict unmatched values replaced by the placeholder

  Json to_json() const;
};

/// Numeric tokens of one section that are subject to verification. Exempt
/// tokens (years, references, counts, enumeration indices, citation keys,
/// digits inside identifiers) are skipped.
std::vector<NumericClaim> extract_claims(const std::string& section, const std::string& text,
                                         const std::vector<std::string>& conditions, const ClaimConfig& cfg);

/// True when `value`, printed at the claim's precision, reads exactly as the claim.
bool printed_matches(const NumericClaim& claim, double value);

/// Every (condition, metric) entry whose mean, std or a seed value prints as the claim.
std::vector<std::string> matching_entries(const NumericClaim& claim, const VerifiedRegistry& reg);

DocumentVerification verify_document(const Json& manuscript, const VerifiedRegistry& reg,
                                     const ClaimConfig& cfg = ClaimConfig::defaults());

}  // namespace labloop::verify
