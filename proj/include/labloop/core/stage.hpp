#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace labloop {

enum class Phase : char { A = 'A', B = 'B', C = 'C', D = 'D', E = 'E', F = 'F', G = 'G', H = 'H' };

/// One of the 23 pipeline stages. The ordinal determines name and phase.
class StageId {
 public:
  static constexpr int kCount = 23;

  /// Throws ConfigError for ordinals outside 1..23.
  static StageId of(int ordinal);
  static std::optional<StageId> by_name(std::string_view name);
  static const std::array<StageId, kCount>& all();

  constexpr int ordinal() const { return ordinal_; }
  std::string_view name() const;
  Phase phase() const;
  /// Directory name such as "08-Hypothesis_Gen".
  std::string dir_name() const;

  friend constexpr bool operator==(StageId a, StageId b) { return a.ordinal_ == b.ordinal_; }
  friend constexpr auto operator<=>(StageId a, StageId b) { return a.ordinal_ <=> b.ordinal_; }

 private:
  constexpr explicit StageId(int ordinal) : ordinal_(ordinal) {}
  int ordinal_;
};

namespace stages {
inline constexpr int kTopicInit = 1;
inline constexpr int kLiteratureScreen = 5;
inline constexpr int kHypothesisGen = 8;
inline constexpr int kExperimentDesign = 9;
inline constexpr int kCodeGeneration = 10;
inline constexpr int kExperimentRun = 12;
inline constexpr int kIterativeRefine = 13;
inline constexpr int kResultAnalysis = 14;
inline constexpr int kResearchDecision = 15;
inline constexpr int kPaperOutline = 16;
inline constexpr int kPaperDraft = 17;
inline constexpr int kPaperRevision = 19;
inline constexpr int kQualityGate = 20;
inline constexpr int kKnowledgeArchive = 21;
inline constexpr int kExportPublish = 22;
inline constexpr int kCitationVerify = 23;
}  // namespace stages

/// Last stage of each phase A..H.
std::array<int, 8> phase_boundary_stages();

}  // namespace labloop
