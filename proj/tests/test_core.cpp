#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "prefrank/core.hpp"

using namespace prefrank;

namespace {

EditCandidate cand(const std::string& id, std::size_t dim = 4,
                   const std::string& group = "g") {
  return EditCandidate(id, group, "gen-a/seed-1", std::vector<double>(dim, 0.5));
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("validate_group accepts a well-formed group") {
  auto g = validate_group({cand("b"), cand("a")},
                          {DimensionalAnnotation("a", 3, 2),
                           DimensionalAnnotation("b", 4, 4)});
  CHECK(g.size() == 2);
  CHECK(g.dim() == 4);
  CHECK(g.group_id() == "g");
  CHECK(g.candidates()[0].candidate_id() == "a");
  REQUIRE(g.find("b") != nullptr);
  CHECK(g.find("zz") == nullptr);
  CHECK(g.annotations_for("a").size() == 1);
  CHECK(g.annotations_for("a")[0].sum() == 5);
}

TEST_CASE("Likert scores outside 1..4 are rejected") {
  CHECK(code_of([] { DimensionalAnnotation("a", 5, 1); }) ==
        ErrorCode::LikertOutOfRange);
  CHECK(code_of([] { DimensionalAnnotation("a", 1, 0); }) ==
        ErrorCode::LikertOutOfRange);
  try {
    DimensionalAnnotation("cand-17", 5, 1);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("cand-17") != std::string::npos);
  }
}

TEST_CASE("feature lengths must agree within a group") {
  try {
    validate_group({cand("a", 4), cand("b", 5)}, {});
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("annotation for an unknown candidate") {
  try {
    validate_group({cand("a")}, {DimensionalAnnotation("ghost", 2, 2)});
    FAIL("expected MissingCandidate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingCandidate);
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
}

TEST_CASE("one annotation per annotator per candidate") {
  CHECK(code_of([] {
          validate_group({cand("a")}, {DimensionalAnnotation("a", 2, 2, "r1"),
                                       DimensionalAnnotation("a", 3, 3, "r1")});
        }) == ErrorCode::DuplicateAnnotation);
  auto g = validate_group({cand("a")}, {DimensionalAnnotation("a", 2, 2, "r2"),
                                        DimensionalAnnotation("a", 3, 3, "r1")});
  const auto anns = g.annotations_for("a");
  REQUIRE(anns.size() == 2);
  CHECK(anns[0].annotator_id() == "r1");
}

TEST_CASE("duplicate candidate ids and foreign groups are rejected") {
  CHECK(code_of([] { validate_group({cand("a"), cand("a")}, {}); }) ==
        ErrorCode::DuplicateId);
  CHECK(code_of([] {
          validate_group({cand("a", 4, "g1"), cand("b", 4, "g2")}, {});
        }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { validate_group({}, {}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("non-finite features are rejected") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(EditCandidate("a", "g", "t", {1.0, nan}), Error);
  CHECK_THROWS_AS(EditCandidate("a", "g", "t", {INFINITY}), Error);
}

TEST_CASE("shared_annotations uses the smallest common annotator") {
  auto g = validate_group(
      {cand("a"), cand("b")},
      {DimensionalAnnotation("a", 1, 1, "zed"), DimensionalAnnotation("a", 2, 2, "amy"),
       DimensionalAnnotation("b", 3, 3, "zed"), DimensionalAnnotation("b", 4, 4, "bob")});
  auto shared = g.shared_annotations("a", "b");
  REQUIRE(shared.has_value());
  CHECK(shared->first.z1() == 1);
  CHECK(shared->second.z1() == 3);
  auto g2 = validate_group({cand("a"), cand("b")},
                           {DimensionalAnnotation("a", 1, 1, "x"),
                            DimensionalAnnotation("b", 3, 3, "y")});
  CHECK_FALSE(g2.shared_annotations("a", "b").has_value());
}

TEST_CASE("preference pairs and tuples validate their members") {
  CHECK_THROWS_AS(PreferencePair("g", "a", "a", PairLabel::Tie), Error);
  PreferencePair p("g", "a", "b", PairLabel::APreferred);
  const auto s = p.swapped();
  CHECK(s.a() == "b");
  CHECK(s.b() == "a");
  CHECK(s.label() == PairLabel::BPreferred);
  CHECK(PreferencePair("g", "a", "b", PairLabel::Tie).swapped().label() ==
        PairLabel::Tie);
  CHECK(s.swapped() == p);

  CHECK_NOTHROW(RankTuple("g", {"a", "b", "c", "d"}));
  CHECK_THROWS_AS(RankTuple("g", {"a"}), Error);
  CHECK_THROWS_AS(RankTuple("g", {"a", "b", "c", "d", "e"}), Error);
  CHECK_THROWS_AS(RankTuple("g", {"a", "b", "a"}), Error);
}

TEST_CASE("GaussianScore aggregates exactly under each strategy") {
  DimensionalGaussian d{{1.0, 3.0}, {3.0, 4.0}};
  GaussianScore sum(d, AggregationStrategy::Sum);
  CHECK(sum.mu_agg() == 4.0);
  CHECK(sum.sigma_agg() == 5.0);
  CHECK(GaussianScore(d, AggregationStrategy::Mean).mu_agg() == 2.0);
  CHECK(GaussianScore(d, AggregationStrategy::Min).mu_agg() == 1.0);
  CHECK(GaussianScore(d, AggregationStrategy::Min).sigma_agg() == 3.0);
  CHECK_THROWS_AS(GaussianScore(DimensionalGaussian{{0, 0}, {0.0, 1.0}},
                                AggregationStrategy::Mean),
                  Error);
}

TEST_CASE("enum names round trip") {
  for (auto s : {AggregationStrategy::Min, AggregationStrategy::Mean,
                 AggregationStrategy::Sum}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("Median"), Error);
}
