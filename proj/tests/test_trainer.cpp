#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

#include "prefrank/data.hpp"
#include "prefrank/trainer.hpp"

using namespace prefrank;

namespace {

CheckedGroup make_group(const std::string& gid,
                        const std::vector<std::pair<int, int>>& z,
                        std::size_t dim = 2) {
  std::vector<EditCandidate> cands;
  std::vector<DimensionalAnnotation> anns;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::string id = gid + "-c" + std::to_string(i);
    std::vector<double> f(dim);
    for (std::size_t d = 0; d < dim; ++d) f[d] = 0.1 * double(i) - 0.3 * double(d);
    cands.emplace_back(id, gid, "t", f);
    anns.emplace_back(id, z[i].first, z[i].second);
  }
  return validate_group(std::move(cands), std::move(anns));
}

const PreferencePair& find_pair(const std::vector<PreferencePair>& pairs,
                                const std::string& x, const std::string& y) {
  for (const auto& p : pairs) {
    if ((p.a() == x && p.b() == y) || (p.a() == y && p.b() == x)) return p;
  }
  throw std::runtime_error("pair not found");
}

PairLabel label_for_first(const PreferencePair& p, const std::string& x) {
  return p.a() == x ? p.label() : p.swapped().label();
}

}  // namespace

TEST_CASE("build_pairs labels by Likert sum") {
  const auto g = make_group("g", {{4, 4}, {3, 2}, {4, 2}, {2, 4}});
  const auto pairs = build_pairs(g, 0);
  CHECK(pairs.size() == 6);
  CHECK(label_for_first(find_pair(pairs, "g-c0", "g-c1"), "g-c0") ==
        PairLabel::APreferred);
  CHECK(find_pair(pairs, "g-c2", "g-c3").label() == PairLabel::Tie);
  CHECK(label_for_first(find_pair(pairs, "g-c1", "g-c0"), "g-c1") ==
        PairLabel::BPreferred);
}

TEST_CASE("seven candidates give 21 pairs, orientation depends on the seed") {
  const auto g = make_group("g", {{1, 1}, {2, 1}, {3, 1}, {4, 1}, {4, 2}, {4, 3}, {4, 4}});
  const auto p0 = build_pairs(g, 0);
  CHECK(p0.size() == 21);
  CHECK(build_pairs(g, 0) == p0);
  bool differs = false;
  for (std::uint64_t s = 1; s < 5 && !differs; ++s) differs = build_pairs(g, s) != p0;
  CHECK(differs);
  std::size_t a_slot_wins = 0;
  for (const auto& p : p0) a_slot_wins += p.label() == PairLabel::APreferred;
  CHECK(a_slot_wins > 0);
  CHECK(a_slot_wins < 21);
  const auto capped = build_pairs(g, 0, 5);
  CHECK(capped.size() == 5);
}

TEST_CASE("build_pairs rejects unannotated candidates") {
  auto g = validate_group({EditCandidate("a", "g", "t", {0.0}),
                           EditCandidate("b", "g", "t", {1.0})},
                          {DimensionalAnnotation("a", 2, 2)});
  try {
    build_pairs(g, 0);
    FAIL("expected UnannotatedCandidate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnannotatedCandidate);
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
}

TEST_CASE("qualifying ties split into two opposing samples") {
  const auto g = make_group("g", {{4, 2}, {2, 4}, {3, 3}, {3, 3}});
  std::vector<PreferencePair> ties = {
      PreferencePair("g", "g-c0", "g-c1", PairLabel::Tie),
      PreferencePair("g", "g-c2", "g-c3", PairLabel::Tie)};
  const auto out = decompose_ties(ties, std::span(&g, 1));
  REQUIRE(out.size() == 2);
  CHECK(out[0].a() == "g-c0");
  CHECK(out[0].label() == PairLabel::APreferred);
  CHECK(out[1].label() == PairLabel::BPreferred);
  CHECK(out[0].origin() == PairOrigin::TieDecomposed);
  CHECK(out[1].origin() == PairOrigin::TieDecomposed);
}

TEST_CASE("five ties with three qualifying") {
  const auto g = make_group(
      "g", {{4, 2}, {2, 4}, {3, 3}, {3, 3}, {1, 3}, {3, 1}, {1, 3}});
  std::vector<PreferencePair> in = {
      PreferencePair("g", "g-c0", "g-c1", PairLabel::Tie),  // qualifies
      PreferencePair("g", "g-c0", "g-c2", PairLabel::Tie),  // qualifies
      PreferencePair("g", "g-c4", "g-c5", PairLabel::Tie),  // qualifies
      PreferencePair("g", "g-c2", "g-c3", PairLabel::Tie),  // identical
      PreferencePair("g", "g-c4", "g-c6", PairLabel::Tie),  // identical
      PreferencePair("g", "g-c2", "g-c4", PairLabel::APreferred),
  };
  const auto out = decompose_ties(in, std::span(&g, 1));
  std::size_t ties = 0, decomposed = 0, strict = 0;
  for (const auto& p : out) {
    ties += p.label() == PairLabel::Tie;
    decomposed += p.origin() == PairOrigin::TieDecomposed;
    strict += p.origin() == PairOrigin::Annotated;
  }
  CHECK(ties == 0);
  CHECK(decomposed == 6);
  CHECK(strict == 1);
  CHECK(out.size() == 7);
  CHECK(out.back() == in.back());
}

TEST_CASE("tie_qualifies requires complementary advantages") {
  CHECK(tie_qualifies(DimensionalAnnotation("a", 4, 2), DimensionalAnnotation("b", 2, 4)));
  CHECK(tie_qualifies(DimensionalAnnotation("a", 1, 4), DimensionalAnnotation("b", 3, 2)));
  CHECK_FALSE(tie_qualifies(DimensionalAnnotation("a", 3, 3), DimensionalAnnotation("b", 3, 3)));
  CHECK_FALSE(tie_qualifies(DimensionalAnnotation("a", 3, 2), DimensionalAnnotation("b", 3, 1)));
}

TEST_CASE("decompose_ties needs the group's annotations") {
  const auto g = make_group("g", {{4, 2}, {2, 4}});
  std::vector<PreferencePair> in = {PreferencePair("other", "x", "y", PairLabel::Tie)};
  try {
    decompose_ties(in, std::span(&g, 1));
    FAIL("expected MissingAnnotation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingAnnotation);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.peak_lr = 1e-3;
  c.warmup_ratio = 0.05;
  const std::size_t total = 200;
  const std::size_t w = warmup_steps(total, c.warmup_ratio);
  CHECK(w == 10);
  CHECK(lr_at(0, total, c) == 0.0);
  CHECK(lr_at(w, total, c) == c.peak_lr);
  CHECK(lr_at(w / 2, total, c) == doctest::Approx(c.peak_lr / 2));
  CHECK(lr_at(w + (total - w) / 2, total, c) ==
        doctest::Approx(c.peak_lr * (1 + std::cos(std::numbers::pi / 2)) / 2));
  CHECK(lr_at(w + (total - w) / 2, total, c) == doctest::Approx(c.peak_lr / 2));
  CHECK(lr_at(total, total, c) == 0.0);
  std::size_t peaks = 0;
  double prev = -1.0;
  bool rising = true;
  for (std::size_t s = 0; s <= total; ++s) {
    const double lr = lr_at(s, total, c);
    CHECK(lr >= 0.0);
    CHECK(lr <= c.peak_lr);
    if (rising && lr < prev) {
      rising = false;
      ++peaks;
    }
    if (!rising) CHECK(lr <= prev);
    if (s > 0) CHECK(std::abs(lr - prev) <= c.peak_lr / double(w) + 1e-15);
    prev = lr;
  }
  CHECK(peaks == 1);
  c.warmup_ratio = 0.0;
  CHECK(lr_at(0, total, c) == c.peak_lr);
}

TEST_CASE("AdamW matches a hand-computed first step") {
  AdamW opt(2, 0.9, 0.95, 1e-8, 0.1);
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g = {0.5, -0.25};
  opt.step(p, g, 0.01);
  // Bias-corrected first step moves each parameter by lr * sign(g) (up to eps)
  // after decoupled decay p *= 1 - lr * wd.
  CHECK(p[0] == doctest::Approx(1.0 * (1 - 0.001) - 0.01).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(-2.0 * (1 - 0.001) + 0.01).epsilon(1e-9));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("config JSON is strict and round trips") {
  TrainConfig c;
  c.epochs = 3;
  c.loss.loss_kind = LossKind::Regression;
  c.loss.strategy = AggregationStrategy::Min;
  c.hidden = {8, 4};
  c.head_mode = HeadMode::Shared;
  const auto j = to_json(c);
  CHECK(train_config_from_json(j) == c);
  CHECK(config_digest(c) == config_digest(train_config_from_json(j)));
  TrainConfig d = c;
  d.seed = 1;
  CHECK(config_digest(c) != config_digest(d));

  auto bad = j;
  bad["learning_rate"] = 0.1;
  try {
    train_config_from_json(bad);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(train_config_from_json({{"epochs", "two"}}), Error);
  CHECK_THROWS_AS(train_config_from_json({{"loss_kind", "Hinge"}}), Error);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", 0}}), Error);
  CHECK(train_config_from_json({{"loss_kind", "Regression"}}).loss.loss_kind ==
        LossKind::Regression);
  CHECK(TrainConfig{}.peak_lr == 1e-3);
  CHECK(kFullModelPeakLr == 2e-6);
}

TEST_CASE("standardization uses population statistics") {
  const auto g = validate_group(
      {EditCandidate("a", "g", "t", {1.0, 5.0}), EditCandidate("b", "g", "t", {3.0, 5.0})},
      {});
  const auto s = Standardization::fit(std::span(&g, 1));
  CHECK(s.mean == std::vector<double>{2.0, 5.0});
  CHECK(s.inv_std[0] == 1.0);
  CHECK(s.inv_std[1] == 1.0);  // constant column is left unscaled
  CHECK(s.apply(std::vector<double>{3.0, 6.0}) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("validation split takes the last groups by id") {
  std::vector<CheckedGroup> groups;
  for (const char* id : {"g3", "g1", "g0", "g2", "g4", "g5", "g6", "g7", "g8", "g9"}) {
    groups.push_back(make_group(id, {{1, 1}, {2, 2}}));
  }
  auto [tr, val] = split_validation(groups, 0.1);
  CHECK(tr.size() == 9);
  REQUIRE(val.size() == 1);
  CHECK(val[0].group_id() == "g9");
  CHECK(tr.front().group_id() == "g0");
  auto [tr2, val2] = split_validation(std::vector<CheckedGroup>(groups.begin(), groups.begin() + 3), 0.1);
  CHECK(val2.size() == 1);
  auto [tr3, val3] = split_validation(groups, 0.0);
  CHECK(val3.empty());
}

namespace {

SyntheticDataset small_synth(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.n_groups = 30;
  spec.dim = 6;
  spec.seed = seed;
  return gen_synthetic(spec);
}

}  // namespace

TEST_CASE("training reduces the rank loss and is bitwise deterministic") {
  const auto ds = small_synth();
  auto [tr, val] = split_validation(ds.groups, 0.2);
  TrainConfig c;
  c.seed = 9;
  c.hidden = {16};
  const auto m1 = train(tr, c, val);
  const auto m2 = train(tr, c, val);
  CHECK(m1.params == m2.params);
  REQUIRE(m1.report.epochs.size() == 2);
  CHECK(m1.report.epochs.back().train_loss < m1.report.initial_loss);
  CHECK(m1.report.epochs.back().val_accuracy.has_value());
  CHECK(m1.report.annotated_pairs == tr.size() * 21);
  CHECK(m1.report.training_samples ==
        m1.report.annotated_pairs - m1.report.tie_pairs + m1.report.decomposed_samples);
  CHECK(m1.report.tie_pairs == m1.report.dropped_ties + m1.report.decomposed_samples / 2);
  c.seed = 10;
  CHECK_FALSE(train(tr, c, val).params == m1.params);
}

TEST_CASE("regression and pointwise modes consume one point per annotation") {
  const auto ds = small_synth();
  for (auto kind : {LossKind::Regression, LossKind::PointwiseOnly}) {
    TrainConfig c;
    c.loss.loss_kind = kind;
    c.hidden = {8};
    const auto m = train(ds.groups, c);
    CHECK(m.report.training_samples == 30 * 7);
    CHECK(m.report.loss_kind == kind);
    CHECK(m.report.epochs.back().train_loss < m.report.initial_loss);
    CHECK(to_json(m.report)["loss_kind"] == std::string(to_string(kind)));
  }
}

TEST_CASE("tie decomposition can be switched off") {
  const auto ds = small_synth();
  TrainConfig c;
  c.hidden = {4};
  c.epochs = 1;
  c.tie_decomposition = false;
  const auto m = train(ds.groups, c);
  CHECK(m.report.decomposed_samples == 0);
  CHECK(m.report.training_samples == m.report.annotated_pairs - m.report.tie_pairs);
}

TEST_CASE("standardized training stores its statistics") {
  const auto ds = small_synth();
  TrainConfig c;
  c.hidden = {4};
  c.epochs = 1;
  c.feature_standardize = true;
  const auto m = train(ds.groups, c);
  REQUIRE(m.standardization.has_value());
  CHECK(m.standardization->mean.size() == 6);
  const auto& f = ds.groups[0].candidates()[0].feature();
  const auto direct = head_forward(m.standardization->apply(f), m.params, c.loss.sigma_floor);
  CHECK(m.score(f).mu()[0] == direct.mu[0]);
}

TEST_CASE("training failure modes") {
  TrainConfig c;
  CHECK_THROWS_AS(train({}, c), Error);
  try {
    train(std::vector<CheckedGroup>{}, c);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDataset);
  }
  // Every pair tied and nothing qualifies: no rank samples remain.
  const auto flat = make_group("g", {{2, 2}, {2, 2}, {2, 2}});
  try {
    train(std::span(&flat, 1), c);
    FAIL("expected EmptyDataset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyDataset);
  }
  const auto ds = small_synth();
  c.peak_lr = 1e300;
  c.weight_decay = 0.0;
  c.loss.loss_kind = LossKind::Regression;
  try {
    train(ds.groups, c);
    FAIL("expected DivergedLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergedLoss);
  }
}
