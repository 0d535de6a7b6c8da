#include "labloop/core/section_lengths.hpp"

#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop {

std::string to_string(LengthVerdict v) {
  switch (v) {
    case LengthVerdict::Under: return "under";
    case LengthVerdict::In: return "in";
    case LengthVerdict::Over: return "over";
  }
  return "under";
}

std::vector<SectionTarget> default_section_targets() {
  return {{"abstract", 150, 200},    {"introduction", 800, 1000}, {"related work", 600, 800},
          {"method", 1000, 1500},    {"experiments", 800, 1200},  {"results", 600, 800},
          {"discussion", 400, 600},  {"conclusion", 200, 300}};
}

std::vector<SectionTarget> load_section_targets(const fs::path& file) {
  Json doc = Json::parse(read_file(file));
  std::vector<SectionTarget> out;
  for (const auto& t : doc.at("sections")) {
    out.push_back({text::to_lower(t.at("section").get<std::string>()), t.at("min").get<std::size_t>(),
                   t.at("max").get<std::size_t>()});
    if (out.back().min_words > out.back().max_words) {
      throw ConfigError("section target min exceeds max for " + out.back().section);
    }
  }
  return out;
}

std::vector<SectionLength> enforce_section_lengths(const Json& manuscript,
                                                   const std::vector<SectionTarget>& targets) {
  std::vector<SectionLength> rows;
  const Json sections = manuscript.value("sections", Json::array());
  for (const auto& t : targets) {
    SectionLength row;
    row.section = t.section;
    row.target = t;
    for (const auto& s : sections) {
      if (text::to_lower(s.value("name", "")) == t.section) row.actual += text::word_count(s.value("text", ""));
    }
    if (row.actual < t.min_words) {
      row.verdict = LengthVerdict::Under;
    } else if (row.actual > t.max_words) {
      row.verdict = LengthVerdict::Over;
    } else {
      row.verdict = LengthVerdict::In;
    }
    rows.push_back(row);
  }
  return rows;
}

Json to_json(const std::vector<SectionLength>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"section", r.section},
                   {"min", r.target.min_words},
                   {"max", r.target.max_words},
                   {"actual", r.actual},
                   {"verdict", to_string(r.verdict)}});
  }
  return out;
}

}  // namespace labloop
