#include "labloop/evolution/lessons.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "labloop/common/digest.hpp"
#include "labloop/common/error.hpp"
#include "labloop/common/text.hpp"

namespace labloop::evolution {

void Lesson::check() const {
  if (!kLessonCategories.count(category)) throw InvalidRequest("unknown lesson category '" + category + "'");
  if (!(severity > 0.0 && severity <= 1.0)) throw InvalidRequest(fmt::format("severity {} outside (0, 1]", severity));
}

Json Lesson::to_json() const {
  Json j{{"id", id},
         {"category", category},
         {"severity", severity},
         {"mitigation", mitigation},
         {"recorded_at", recorded_at},
         {"source_run", source_run}};
  if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
  return j;
}

Lesson Lesson::from_json(const Json& j) {
  Lesson l;
  l.id = j.at("id").get<std::string>();
  l.category = j.at("category").get<std::string>();
  l.severity = j.at("severity").get<double>();
  l.mitigation = j.value("mitigation", "");
  l.recorded_at = j.at("recorded_at").get<std::string>();
  l.source_run = j.value("source_run", "");
  l.fingerprint = j.value("fingerprint", "");
  l.check();
  return l;
}

double weight(double severity, double dt_days, double half_life_days) {
  if (dt_days < 0) throw InvalidRequest("evaluation time precedes the lesson timestamp");
  if (!(half_life_days > 0)) throw InvalidRequest("half-life must be positive");
  if (std::isinf(half_life_days)) return severity;
  return severity * std::exp(-std::log(2.0) * dt_days / half_life_days);
}

double weight(const Lesson& l, const DecayParams& p) {
  const auto dt = p.now - parse_iso8601(l.recorded_at);
  const double days = static_cast<double>(dt.count()) / 86400.0;
  return weight(l.severity, days, p.half_life_days);
}

void rank(std::vector<RankedLesson>& lessons) {
  std::sort(lessons.begin(), lessons.end(), [](const RankedLesson& a, const RankedLesson& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.lesson.recorded_at != b.lesson.recorded_at) return a.lesson.recorded_at > b.lesson.recorded_at;
    return a.lesson.id < b.lesson.id;
  });
}

namespace {

std::string lesson_id(const std::string& run, const std::string& category, const std::string& key) {
  return "L-" + sha256_hex(run + "\n" + category + "\n" + key).substr(0, 12);
}

}  // namespace

std::vector<Lesson> extract_lessons(const RunState& run, const std::string& timestamp, const SeverityTable& sev) {
  std::vector<Lesson> out;
  auto add = [&](const std::string& category, double s, const std::string& mitigation, const std::string& key,
                 const std::string& fingerprint = {}) {
    Lesson l{lesson_id(run.run_id, category, key), category, s, mitigation, timestamp, run.run_id, fingerprint};
    l.check();
    out.push_back(std::move(l));
  };

  struct RepairGroup {
    int failures = 0;
    bool exhausted = false;
    std::string category;
    int stage = 0;
  };
  std::map<std::string, RepairGroup> repairs;
  std::vector<std::string> order;

  for (std::size_t i = 0; i < run.events.size(); ++i) {
    const RunEvent& e = run.events[i];
    const std::string key = fmt::format("{}#{}", e.kind, i);
    if (e.kind == "pivot") {
      add("decision", sev.pivot,
          fmt::format("A hypothesis was abandoned after analysis ({}). Check that the design can separate the "
                      "conditions before committing to it.",
                      e.detail.empty() ? "no justification recorded" : e.detail),
          key);
    } else if (e.kind == "doc_rejected") {
      add("verification", sev.doc_reject,
          fmt::format("The draft was rejected for unverified numbers ({}). Quote only registry values in "
                      "abstract, results and experiments.",
                      e.detail),
          key);
    } else if (e.kind == "gate_rejected") {
      add("gate_feedback", sev.gate_rejected,
          fmt::format("Reviewer rejected stage {}: {}", e.stage, e.detail.empty() ? "no guidance given" : e.detail),
          key);
    } else if (e.kind == "repair_failure" || e.kind == "repair_exhausted") {
      const std::string fp = e.fingerprint.empty() ? e.detail : e.fingerprint;
      auto [it, fresh] = repairs.try_emplace(fp);
      if (fresh) order.push_back(fp);
      RepairGroup& g = it->second;
      if (e.kind == "repair_failure") ++g.failures;
      if (e.kind == "repair_exhausted") g.exhausted = true;
      if (g.category.empty()) g.category = e.category;
      g.stage = e.stage;
    }
  }
  for (const auto& fp : order) {
    const RepairGroup& g = repairs[fp];
    if (!g.exhausted && g.failures < 2) continue;
    const bool repeated = g.failures >= 2;
    add("repair", repeated ? sev.repair_repeated : sev.repair_exhausted,
        fmt::format("Generated code kept failing with {}{}. Address it in the blueprint before writing files.",
                    g.category.empty() ? "an unclassified error" : g.category,
                    repeated ? fmt::format(" ({} identical failures)", g.failures) : std::string{}),
        "repair#" + fp, fp);
  }
  return out;
}

std::vector<Lesson> LessonStore::all() const {
  std::vector<Lesson> out;
  if (!fs::exists(file_)) return out;
  std::set<std::string> ids;
  for (const auto& line : text::split_lines(read_file(file_))) {
    if (text::trim(line).empty()) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn trailing record from a crashed writer
    Lesson l = Lesson::from_json(j);
    if (ids.insert(l.id).second) out.push_back(std::move(l));
  }
  return out;
}

std::optional<Lesson> LessonStore::find(const std::string& id) const {
  for (auto& l : all()) {
    if (l.id == id) return l;
  }
  return std::nullopt;
}

std::size_t LessonStore::append(const std::vector<Lesson>& lessons) {
  std::set<std::string> ids;
  for (const auto& l : all()) ids.insert(l.id);
  std::size_t n = 0;
  for (const auto& l : lessons) {
    l.check();
    if (!ids.insert(l.id).second) continue;
    append_line_locked(file_, l.to_json().dump());
    ++n;
  }
  return n;
}

std::vector<RankedLesson> LessonStore::retrieve(const std::string& category, const DecayParams& p, std::size_t limit,
                                                double floor) const {
  std::vector<RankedLesson> out;
  for (auto& l : all()) {
    if (l.category != category) continue;
    const double w = weight(l, p);
    if (w >= floor) out.push_back({std::move(l), w});
  }
  rank(out);
  if (out.size() > limit) out.resize(limit);
  return out;
}

std::size_t LessonStore::prune(const DecayParams& p, double floor) {
  const auto lessons = all();
  std::string kept;
  std::size_t removed = 0;
  for (const auto& l : lessons) {
    if (weight(l, p) < floor) {
      ++removed;
    } else {
      kept += l.to_json().dump() + "\n";
    }
  }
  if (removed) write_file_atomic(file_, kept);
  return removed;
}

std::string render_overlay(std::vector<RankedLesson> lessons) {
  if (lessons.empty()) return "";
  rank(lessons);
  std::string out = "Lessons from earlier runs:\n";
  for (const auto& r : lessons) out += fmt::format("- [{} {:.2f}] {}\n", r.lesson.category, r.weight, r.lesson.mitigation);
  return out;
}

OverlayPolicy OverlayPolicy::from_json(const Json& j) {
  OverlayPolicy p;
  if (j.contains("stage_categories")) {
    p.stage_categories.clear();
    for (const auto& [k, v] : j["stage_categories"].items()) {
      p.stage_categories[std::stoi(k)] = v.get<std::vector<std::string>>();
    }
  }
  p.limit = j.value("limit", p.limit);
  p.floor = j.value("floor", p.floor);
  return p;
}

std::string overlay_for_stage(const LessonStore& store, const OverlayPolicy& policy, int stage, const DecayParams& p) {
  auto it = policy.stage_categories.find(stage);
  if (it == policy.stage_categories.end()) return "";
  std::vector<RankedLesson> merged;
  for (const auto& cat : it->second) {
    for (auto& r : store.retrieve(cat, p, policy.limit, policy.floor)) merged.push_back(std::move(r));
  }
  rank(merged);
  if (merged.size() > policy.limit) merged.resize(policy.limit);
  return render_overlay(std::move(merged));
}

}  // namespace labloop::evolution
