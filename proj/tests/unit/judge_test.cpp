#include <doctest.h>

#include <random>

#include "labloop/common/error.hpp"
#include "labloop/judge/judge.hpp"
#include "testkit.hpp"

using namespace labloop;
using namespace labloop::judge;

namespace {

Rubric t01() { return Rubric::load(testkit::source_dir() / "rubrics" / "T01.json"); }

Review uniform(const Rubric& r, double s) {
  Review out;
  for (const auto& l : r.leaves) out.push_back({l.id, s, ""});
  return out;
}

}  // namespace

TEST_CASE("shipped rubrics are well formed") {
  CHECK_NOTHROW(t01().check());
  CHECK_NOTHROW(Rubric::load(testkit::source_dir() / "rubrics" / "S01.json").check());
  CHECK(category_weight(Category::RA) == 50);
}

TEST_CASE("all ones give exactly one") {
  const auto s = aggregate(t01(), uniform(t01(), 1.0));
  CHECK(s.overall_strict == 1.0);
  CHECK(s.results_only == 1.0);
  CHECK(aggregate(t01(), uniform(t01(), 0.0)).overall_strict == 0.0);
}

TEST_CASE("weighted means by hand") {
  // S01: CD1 15, CD2 10, CE1 25, RA1 30, RA2 20.
  const auto r = Rubric::load(testkit::source_dir() / "rubrics" / "S01.json");
  const Review rv{{"CD1", 1, ""}, {"CD2", 0, ""}, {"CE1", 0.5, ""}, {"RA1", 1, ""}, {"RA2", 0, ""}};
  const auto s = aggregate(r, rv);
  CHECK(s.overall_strict == doctest::Approx((15 + 12.5 + 30) / 100.0));
  CHECK(s.results_only == doctest::Approx((12.5 + 30) / 75.0));
}

TEST_CASE("aggregate rejects malformed reviews") {
  const auto r = t01();
  auto missing = uniform(r, 1);
  missing.pop_back();
  CHECK_THROWS_AS(aggregate(r, missing), InvalidRequest);
  auto dup = uniform(r, 1);
  dup.push_back(dup.front());
  CHECK_THROWS_AS(aggregate(r, dup), InvalidRequest);
  auto extra = uniform(r, 1);
  extra.push_back({"ZZ9", 1, ""});
  CHECK_THROWS_AS(aggregate(r, extra), InvalidRequest);
  auto range = uniform(r, 1);
  range[0].score = 1.1;
  CHECK_THROWS_AS(aggregate(r, range), InvalidRequest);
}

TEST_CASE("rubric check rejects bad category sums") {
  auto r = t01();
  r.leaves[0].weight += 1;
  CHECK_THROWS_AS(r.check(), InvalidRequest);
}

TEST_CASE("timeout rule") {
  const auto r = t01();
  const auto capped = apply_timeout_rule(r, uniform(r, 0.9), true, false);
  for (const auto& ls : capped) {
    const auto cat = r.leaf(ls.leaf_id).category;
    if (cat == Category::CE) CHECK(ls.score == 0.0);
    if (cat == Category::RA) CHECK(ls.score == 0.1);
    if (cat == Category::CD) CHECK(ls.score == 0.9);
  }
  const auto low = apply_timeout_rule(r, uniform(r, 0.05), true, false);
  for (const auto& ls : low) {
    if (r.leaf(ls.leaf_id).category == Category::RA) CHECK(ls.score == 0.05);
  }
  CHECK(apply_timeout_rule(r, uniform(r, 0.9), true, true)[0].score == 0.9);
  CHECK(apply_timeout_rule(r, uniform(r, 0.9), false, false).back().score == 0.9);
}

TEST_CASE("adjudication") {
  const auto r = t01();
  auto a = uniform(r, 0.5);
  auto b = uniform(r, 0.6);
  auto adj = adjudicate(r, a, b);
  CHECK(adj.flagged.empty());
  CHECK(adj.final_review[0].score == doctest::Approx(0.55));

  b[0].score = 0.9;
  CHECK_THROWS_AS(adjudicate(r, a, b), InvalidRequest);
  auto third = uniform(r, 0.2);
  adj = adjudicate(r, a, b, third);
  CHECK(adj.flagged == std::vector<std::string>{r.leaves[0].id});
  CHECK(adj.final_review[0].score == 0.2);
  CHECK(adj.final_review[1].score == doctest::Approx(0.55));
}

TEST_CASE("review json round trip") {
  const auto rv = uniform(t01(), 0.25);
  const auto back = review_from_json(to_json(rv));
  REQUIRE(back.size() == rv.size());
  CHECK(back[3].score == 0.25);
}
