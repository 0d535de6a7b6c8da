#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"

namespace labloop::judge {

enum class Category { CD, CE, RA };
std::string to_string(Category c);
Category category_from_string(const std::string& s);

/// CD 25, CE 25, RA 50.
double category_weight(Category c);

struct Leaf {
  std::string id;
  Category category = Category::CD;
  double weight = 0.0;
  std::string description;
};

struct Rubric {
  std::string topic_id;
  std::string title;
  std::vector<Leaf> leaves;

  /// Throws InvalidRequest unless leaf weights lie in [0,100], ids are unique,
  /// category sums match 25/25/50 and the total is 100 (within 1e-6).
  void check() const;
  const Leaf& leaf(const std::string& id) const;
  static Rubric from_json(const Json& j);
  static Rubric load(const fs::path& file);
  Json to_json() const;
};

struct LeafScore {
  std::string leaf_id;
  double score = 0.0;  // in [0,1]
  std::string rationale;
};

using Review = std::vector<LeafScore>;

Review review_from_json(const Json& j);
Json to_json(const Review& r);

struct JudgeScore {
  double overall_strict = 0.0;
  double results_only = 0.0;
  Json to_json() const;
};

/// overall = sum(w*s) / sum(w) over all leaves, results_only = the same over
/// CE and RA. The checked rubric makes those denominators 100 and 75.
/// Throws InvalidRequest on missing, extra or duplicate leaves and scores outside [0,1].
JudgeScore aggregate(const Rubric& rubric, const Review& scores);

/// Timed-out runs without a writing phase: CE leaves become 0, RA leaves are capped at 0.1.
Review apply_timeout_rule(const Rubric& rubric, const Review& scores, bool timed_out, bool writing_present = false);

struct Adjudication {
  Review final_review;
  std::vector<std::string> flagged;  // leaves whose two passes differ by more than the threshold
};

/// Unflagged leaves take the mean of both passes; flagged leaves take the third
/// review verbatim. Throws InvalidRequest when a leaf is flagged and no third review is given.
Adjudication adjudicate(const Rubric& rubric, const Review& a, const Review& b,
                        const std::optional<Review>& third = std::nullopt, double threshold = 0.20);

}  // namespace labloop::judge
