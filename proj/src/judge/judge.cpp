#include "labloop/judge/judge.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "labloop/common/error.hpp"

namespace labloop::judge {

std::string to_string(Category c) {
  switch (c) {
    case Category::CD: return "CD";
    case Category::CE: return "CE";
    case Category::RA: return "RA";
  }
  return "CD";
}

Category category_from_string(const std::string& s) {
  if (s == "CD") return Category::CD;
  if (s == "CE") return Category::CE;
  if (s == "RA") return Category::RA;
  throw InvalidRequest("unknown rubric category '" + s + "' (CD, CE, RA)");
}

double category_weight(Category c) {
  switch (c) {
    case Category::CD: return 25.0;
    case Category::CE: return 25.0;
    case Category::RA: return 50.0;
  }
  return 0.0;
}

void Rubric::check() const {
  constexpr double kTol = 1e-6;
  std::set<std::string> ids;
  std::map<Category, double> sums;
  double total = 0.0;
  for (const auto& l : leaves) {
    if (!ids.insert(l.id).second) throw InvalidRequest("duplicate rubric leaf " + l.id);
    if (l.weight < 0.0 || l.weight > 100.0) throw InvalidRequest(fmt::format("leaf {} weight {} outside [0,100]", l.id, l.weight));
    sums[l.category] += l.weight;
    total += l.weight;
  }
  for (auto c : {Category::CD, Category::CE, Category::RA}) {
    if (std::abs(sums[c] - category_weight(c)) > kTol) {
      throw InvalidRequest(fmt::format("{} leaves sum to {}, expected {}", to_string(c), sums[c], category_weight(c)));
    }
  }
  if (std::abs(total - 100.0) > kTol) throw InvalidRequest(fmt::format("leaf weights sum to {}, expected 100", total));
}

const Leaf& Rubric::leaf(const std::string& id) const {
  for (const auto& l : leaves) {
    if (l.id == id) return l;
  }
  throw InvalidRequest("rubric " + topic_id + " has no leaf " + id);
}

Rubric Rubric::from_json(const Json& j) {
  Rubric r;
  r.topic_id = j.at("topic_id").get<std::string>();
  r.title = j.value("title", "");
  for (const auto& l : j.at("leaves")) {
    r.leaves.push_back({l.at("id").get<std::string>(), category_from_string(l.at("category").get<std::string>()),
                        l.at("weight").get<double>(), l.value("description", "")});
  }
  r.check();
  return r;
}

Rubric Rubric::load(const fs::path& file) {
  if (!fs::exists(file)) throw NotFound("no rubric file " + file.string());
  return from_json(Json::parse(read_file(file)));
}

Json Rubric::to_json() const {
  Json leaves_j = Json::array();
  for (const auto& l : leaves) {
    leaves_j.push_back({{"id", l.id}, {"category", to_string(l.category)}, {"weight", l.weight}, {"description", l.description}});
  }
  return {{"topic_id", topic_id},
          {"title", title},
          {"categories", {{"CD", 25}, {"CE", 25}, {"RA", 50}}},
          {"leaves", leaves_j}};
}

Review review_from_json(const Json& j) {
  const Json& arr = j.is_object() ? j.at("scores") : j;
  Review r;
  for (const auto& s : arr) r.push_back({s.at("leaf_id").get<std::string>(), s.at("score").get<double>(), s.value("rationale", "")});
  return r;
}

Json to_json(const Review& r) {
  Json out = Json::array();
  for (const auto& s : r) out.push_back({{"leaf_id", s.leaf_id}, {"score", s.score}, {"rationale", s.rationale}});
  return out;
}

Json JudgeScore::to_json() const { return {{"overall_strict", overall_strict}, {"results_only", results_only}}; }

namespace {

/// Scores keyed by leaf id, checked for coverage.
std::map<std::string, const LeafScore*> index_review(const Rubric& rubric, const Review& scores) {
  std::map<std::string, const LeafScore*> by_id;
  for (const auto& s : scores) {
    if (!by_id.emplace(s.leaf_id, &s).second) throw InvalidRequest("leaf " + s.leaf_id + " scored twice");
    rubric.leaf(s.leaf_id);
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw InvalidRequest(fmt::format("leaf {} score {} outside [0,1]", s.leaf_id, s.score));
  }
  for (const auto& l : rubric.leaves) {
    if (!by_id.count(l.id)) throw InvalidRequest("leaf " + l.id + " has no score");
  }
  return by_id;
}

}  // namespace

JudgeScore aggregate(const Rubric& rubric, const Review& scores) {
  rubric.check();
  const auto by_id = index_review(rubric, scores);
  double num_all = 0.0, den_all = 0.0, num_res = 0.0, den_res = 0.0;
  for (const auto& l : rubric.leaves) {
    const double ws = l.weight * by_id.at(l.id)->score;
    num_all += ws;
    den_all += l.weight;
    if (l.category != Category::CD) {
      num_res += ws;
      den_res += l.weight;
    }
  }
  return {num_all / den_all, num_res / den_res};
}

Review apply_timeout_rule(const Rubric& rubric, const Review& scores, bool timed_out, bool writing_present) {
  if (!timed_out || writing_present) return scores;
  Review out = scores;
  for (auto& s : out) {
    switch (rubric.leaf(s.leaf_id).category) {
      case Category::CE: s.score = 0.0; break;
      case Category::RA: s.score = std::min(s.score, 0.1); break;
      case Category::CD: break;
    }
  }
  return out;
}

Adjudication adjudicate(const Rubric& rubric, const Review& a, const Review& b, const std::optional<Review>& third,
                        double threshold) {
  const auto ia = index_review(rubric, a);
  const auto ib = index_review(rubric, b);
  std::map<std::string, const LeafScore*> ic;
  if (third) ic = index_review(rubric, *third);
  Adjudication out;
  for (const auto& l : rubric.leaves) {
    const LeafScore& sa = *ia.at(l.id);
    const LeafScore& sb = *ib.at(l.id);
    if (std::abs(sa.score - sb.score) > threshold) {
      out.flagged.push_back(l.id);
      if (!third) throw InvalidRequest("leaf " + l.id + " needs a re-adjudication review");
      out.final_review.push_back(*ic.at(l.id));
    } else if (sa.score == sb.score) {
      out.final_review.push_back(sa);
    } else {
      out.final_review.push_back({l.id, (sa.score + sb.score) / 2.0, sa.rationale});
    }
  }
  return out;
}

}  // namespace labloop::judge
