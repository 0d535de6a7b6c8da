#include "labloop/core/stage.hpp"

#include <string>

#include <fmt/format.h>

#include "labloop/common/error.hpp"

namespace labloop {
namespace {

struct StageRow {
  std::string_view name;
  Phase phase;
};

constexpr std::array<StageRow, StageId::kCount> kStages{{
    {"Topic_Init", Phase::A},
    {"Problem_Decompose", Phase::A},
    {"Search_Strategy", Phase::B},
    {"Literature_Collect", Phase::B},
    {"Literature_Screen", Phase::B},
    {"Knowledge_Extract", Phase::B},
    {"Synthesis", Phase::C},
    {"Hypothesis_Gen", Phase::C},
    {"Experiment_Design", Phase::D},
    {"Code_Generation", Phase::D},
    {"Resource_Planning", Phase::D},
    {"Experiment_Run", Phase::E},
    {"Iterative_Refine", Phase::E},
    {"Result_Analysis", Phase::F},
    {"Research_Decision", Phase::F},
    {"Paper_Outline", Phase::G},
    {"Paper_Draft", Phase::G},
    {"Peer_Review", Phase::G},
    {"Paper_Revision", Phase::G},
    {"Quality_Gate", Phase::H},
    {"Knowledge_Archive", Phase::H},
    {"Export_Publish", Phase::H},
    {"Citation_Verify", Phase::H},
}};

}  // namespace

StageId StageId::of(int ordinal) {
  if (ordinal < 1 || ordinal > kCount) {
    throw ConfigError(fmt::format("unknown stage ordinal {}", ordinal));
  }
  return StageId(ordinal);
}

std::optional<StageId> StageId::by_name(std::string_view name) {
  for (int i = 0; i < kCount; ++i) {
    if (kStages[i].name == name) return StageId(i + 1);
  }
  return std::nullopt;
}

const std::array<StageId, StageId::kCount>& StageId::all() {
  static const std::array<StageId, kCount> ids = [] {
    std::array<StageId, kCount> a{StageId(1), StageId(2),  StageId(3),  StageId(4),  StageId(5),
                                  StageId(6), StageId(7),  StageId(8),  StageId(9),  StageId(10),
                                  StageId(11), StageId(12), StageId(13), StageId(14), StageId(15),
                                  StageId(16), StageId(17), StageId(18), StageId(19), StageId(20),
                                  StageId(21), StageId(22), StageId(23)};
    return a;
  }();
  return ids;
}

std::string_view StageId::name() const { return kStages[ordinal_ - 1].name; }

Phase StageId::phase() const { return kStages[ordinal_ - 1].phase; }

std::string StageId::dir_name() const { return fmt::format("{:02}-{}", ordinal_, name()); }

std::array<int, 8> phase_boundary_stages() {
  std::array<int, 8> out{};
  for (int i = 0; i < StageId::kCount; ++i) {
    bool last_of_phase = i + 1 == StageId::kCount || kStages[i + 1].phase != kStages[i].phase;
    if (last_of_phase) out[static_cast<int>(kStages[i].phase) - 'A'] = i + 1;
  }
  return out;
}

}  // namespace labloop
