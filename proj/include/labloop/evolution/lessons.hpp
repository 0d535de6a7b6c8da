#pragma once

#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labloop/common/clock.hpp"
#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"
#include "labloop/core/run_state.hpp"

namespace labloop::evolution {

/// Closed taxonomy.
inline const std::set<std::string> kLessonCategories{"repair", "decision", "gate_feedback", "verification"};

struct Lesson {
  std::string id;
  std::string category;
  double severity = 1.0;  // in (0, 1]
  std::string mitigation;
  std::string recorded_at;  // ISO-8601 UTC
  std::string source_run;
  std::string fingerprint;  // repair lessons only

  /// Throws InvalidRequest when the category or severity is out of range.
  void check() const;
  Json to_json() const;
  static Lesson from_json(const Json& j);
};

struct DecayParams {
  /// Infinity disables decay.
  double half_life_days = 30.0;
  Seconds now{};

  static constexpr double kNoDecay = std::numeric_limits<double>::infinity();
};

/// w = s * exp(-ln2 * dt / T_half). Throws InvalidRequest when now precedes recorded_at
/// or the half-life is not positive.
double weight(const Lesson& l, const DecayParams& p);
double weight(double severity, double dt_days, double half_life_days);

struct RankedLesson {
  Lesson lesson;
  double weight = 0.0;
};

/// Weight descending, then most recent, then id.
void rank(std::vector<RankedLesson>& lessons);

struct SeverityTable {
  double doc_reject = 1.0;
  double pivot = 0.8;
  double repair_exhausted = 0.7;
  double repair_repeated = 0.9;
  double gate_rejected = 0.6;
};

/// One lesson per pivot, document reject and rejected gate, and one per
/// repair fingerprint that exhausted the budget or failed more than once.
std::vector<Lesson> extract_lessons(const RunState& run, const std::string& timestamp,
                                    const SeverityTable& severities = {});

/// Append-only JSONL journal. Lessons are never rewritten except by prune().
class LessonStore {
 public:
  explicit LessonStore(fs::path file) : file_(std::move(file)) {}

  /// Appends lessons whose id is not already present; returns how many were written.
  std::size_t append(const std::vector<Lesson>& lessons);
  std::vector<Lesson> all() const;
  std::optional<Lesson> find(const std::string& id) const;
  std::vector<RankedLesson> retrieve(const std::string& category, const DecayParams& p, std::size_t limit = 5,
                                     double floor = 0.05) const;
  /// Rewrites the journal without lessons whose weight fell below `floor`; returns the number removed.
  std::size_t prune(const DecayParams& p, double floor);
  const fs::path& file() const { return file_; }

 private:
  fs::path file_;
};

/// One bullet per lesson in rank order, "- [category 0.72] mitigation". Empty input gives "".
std::string render_overlay(std::vector<RankedLesson> lessons);

/// Which lesson categories feed which stage prompts.
struct OverlayPolicy {
  std::map<int, std::vector<std::string>> stage_categories{
      {1, {"decision", "verification"}},
      {8, {"decision", "gate_feedback"}},
      {9, {"decision", "gate_feedback", "repair"}},
      {10, {"repair"}},
      {17, {"verification"}},
  };
  std::size_t limit = 5;
  double floor = 0.05;

  static OverlayPolicy from_json(const Json& j);
};

/// Retrieves the stage's categories, merges and ranks them, keeps `limit`, and renders.
std::string overlay_for_stage(const LessonStore& store, const OverlayPolicy& policy, int stage,
                              const DecayParams& p);

}  // namespace labloop::evolution
