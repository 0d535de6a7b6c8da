#pragma once

#include <string>
#include <vector>

#include "labloop/common/fs.hpp"
#include "labloop/common/json.hpp"

namespace labloop {

struct SectionTarget {
  std::string section;  // matched case-insensitively against manuscript section names
  std::size_t min_words = 0;
  std::size_t max_words = 0;
};

enum class LengthVerdict { Under, In, Over };
std::string to_string(LengthVerdict v);

struct SectionLength {
  std::string section;
  SectionTarget target;
  std::size_t actual = 0;
  LengthVerdict verdict = LengthVerdict::Under;
};

/// Abstract 150-200, introduction 800-1000, related work 600-800, method
/// 1000-1500, experiments 800-1200, results 600-800, discussion 400-600,
/// conclusion 200-300 words.
std::vector<SectionTarget> default_section_targets();
std::vector<SectionTarget> load_section_targets(const fs::path& file);

/// One row per configured section; a section absent from the draft counts 0 words.
std::vector<SectionLength> enforce_section_lengths(const Json& manuscript,
                                                   const std::vector<SectionTarget>& targets);
Json to_json(const std::vector<SectionLength>& rows);

}  // namespace labloop
