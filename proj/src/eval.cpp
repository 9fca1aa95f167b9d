#include "prefrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "prefrank/digest.hpp"
#include "prefrank/trainer.hpp"

namespace prefrank {

void EvalConfig::validate() const {
  if (!(tie_margin >= 0.0) || !std::isfinite(tie_margin)) {
    throw Error(ErrorCode::InvalidConfig,
                "tie margin must be finite and non-negative");
  }
}

namespace {

double call_scorer(const Scorer& scorer, const std::string& id) {
  double s;
  try {
    s = scorer(id);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ScorerFailure, id + ": " + e.what());
  }
  if (!std::isfinite(s)) {
    throw Error(ErrorCode::ScorerFailure, id + ": non-finite score");
  }
  return s;
}

PairLabel call_judge(const Judge& judge, const std::string& a,
                     const std::string& b) {
  try {
    return judge(a, b);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::JudgeFailure, a + " vs " + b + ": " + e.what());
  }
}

std::vector<double> tuple_scores(const Scorer& scorer, const RankTuple& t) {
  std::vector<double> s;
  s.reserve(t.k());
  for (const auto& id : t.members()) s.push_back(call_scorer(scorer, id));
  return s;
}

}  // namespace

PairLabel predict_label(double score_a, double score_b, double tie_margin) {
  const double diff = score_a - score_b;
  if (diff > tie_margin) return PairLabel::APreferred;
  if (diff < -tie_margin) return PairLabel::BPreferred;
  return PairLabel::Tie;
}

AccuracyCount pairwise_accuracy(const Scorer& scorer,
                                std::span<const PreferencePair> pairs,
                                double tie_margin) {
  AccuracyCount result;
  for (const auto& p : pairs) {
    const double sa = call_scorer(scorer, p.a());
    const double sb = call_scorer(scorer, p.b());
    if (predict_label(sa, sb, tie_margin) == p.label()) ++result.correct;
    ++result.total;
  }
  return result;
}

MultiwayResult multiway_accuracy(const Scorer& scorer,
                                 std::span<const RankTuple> tuples) {
  MultiwayResult result;
  for (const auto& t : tuples) {
    const auto s = tuple_scores(scorer, t);
    // Strict order along the list is equivalent to every member pair being
    // strictly ordered.
    bool correct = true;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (!(s[i] > s[i + 1])) {
        correct = false;
        break;
      }
    }
    auto& bucket = result.per_k[t.k()];
    ++bucket.total;
    ++result.overall.total;
    if (correct) {
      ++bucket.correct;
      ++result.overall.correct;
    }
  }
  return result;
}

AccuracyCount constituent_pair_accuracy(const Scorer& scorer,
                                        std::span<const RankTuple> tuples,
                                        std::optional<std::size_t> k) {
  AccuracyCount result;
  for (const auto& t : tuples) {
    if (k && t.k() != *k) continue;
    const auto s = tuple_scores(scorer, t);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        ++result.total;
        if (s[i] > s[j]) ++result.correct;
      }
    }
  }
  return result;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean(i+1 .. j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) ranks[idx[m]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "spearman inputs differ in length: " +
                    std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()));
  }
  if (x.size() < 2) {
    throw Error(ErrorCode::DegenerateInput, "spearman needs at least 2 items");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean;
    const double b = ry[i] - mean;
    num += a * b;
    dx += a * a;
    dy += b * b;
  }
  if (dx == 0.0 || dy == 0.0) {
    throw Error(ErrorCode::DegenerateInput, "spearman input is constant");
  }
  // sqrt(fl(d * d)) == d, so identical rank vectors give exactly +-1.
  const double rho = num / std::sqrt(dx * dy);
  return std::clamp(rho, -1.0, 1.0);
}

double human_to_human(std::span<const std::vector<double>> ratings,
                      AgreementMode mode) {
  if (ratings.size() < 2) {
    throw Error(ErrorCode::DegenerateInput, "need at least two raters");
  }
  const std::size_t n = ratings.front().size();
  for (const auto& r : ratings) {
    if (r.size() != n) {
      throw Error(ErrorCode::InvalidArgument, "raters rated different items");
    }
  }
  double total = 0.0;
  std::size_t count = 0;
  if (mode == AgreementMode::PairwiseMean) {
    for (std::size_t i = 0; i < ratings.size(); ++i) {
      for (std::size_t j = i + 1; j < ratings.size(); ++j) {
        total += spearman(ratings[i], ratings[j]);
        ++count;
      }
    }
  } else {
    for (std::size_t i = 0; i < ratings.size(); ++i) {
      std::vector<double> others(n, 0.0);
      for (std::size_t j = 0; j < ratings.size(); ++j) {
        if (j == i) continue;
        for (std::size_t m = 0; m < n; ++m) others[m] += ratings[j][m];
      }
      for (double& v : others) v /= static_cast<double>(ratings.size() - 1);
      total += spearman(ratings[i], others);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

PositionBiasResult position_bias_probe(const Judge& judge,
                                       std::span<const PreferencePair> pairs) {
  PositionBiasResult result;
  std::size_t left = 0, right = 0;
  for (const auto& p : pairs) {
    if (p.label() == PairLabel::Tie) continue;
    const bool a_wins = p.label() == PairLabel::APreferred;
    const auto& winner = a_wins ? p.a() : p.b();
    const auto& loser = a_wins ? p.b() : p.a();
    if (call_judge(judge, winner, loser) == PairLabel::APreferred) ++left;
    if (call_judge(judge, loser, winner) == PairLabel::BPreferred) ++right;
    ++result.pairs;
  }
  if (result.pairs > 0) {
    const double n = static_cast<double>(result.pairs);
    result.acc_left = static_cast<double>(left) / n;
    result.acc_right = static_cast<double>(right) / n;
    result.gap = result.acc_left - result.acc_right;
  }
  return result;
}

Judge judge_from_scorer(Scorer scorer, double tie_margin) {
  return [scorer = std::move(scorer), tie_margin](const std::string& a,
                                                  const std::string& b) {
    return predict_label(call_scorer(scorer, a), call_scorer(scorer, b),
                         tie_margin);
  };
}

std::vector<RankTuple> build_tuples(
    const std::string& group_id,
    const std::vector<std::pair<std::string, double>>& scored, std::size_t k,
    std::size_t max_count, std::uint64_t seed) {
  if (k < 2 || k > 4) {
    throw Error(ErrorCode::InvalidArgument,
                "tuple size must be 2, 3 or 4, got " + std::to_string(k));
  }
  auto items = scored;
  std::sort(items.begin(), items.end());
  std::vector<std::vector<std::size_t>> combos;
  if (items.size() >= k) {
    std::vector<std::size_t> pick(k);
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
      bool distinct = true;
      for (std::size_t i = 0; i < k && distinct; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          if (items[pick[i]].second == items[pick[j]].second) {
            distinct = false;
            break;
          }
        }
      }
      if (distinct) combos.push_back(pick);
      // Advance to the next k-combination in lexicographic order.
      std::size_t pos = k;
      while (pos > 0 && pick[pos - 1] == items.size() - k + pos - 1) --pos;
      if (pos == 0) break;
      ++pick[pos - 1];
      for (std::size_t i = pos; i < k; ++i) pick[i] = pick[i - 1] + 1;
    }
  }
  if (max_count > 0 && combos.size() > max_count) {
    std::vector<std::size_t> keep(combos.size());
    std::iota(keep.begin(), keep.end(), 0);
    std::mt19937_64 rng(splitmix64(seed ^ fnv1a64(group_id) ^ k));
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(max_count);
    std::sort(keep.begin(), keep.end());
    std::vector<std::vector<std::size_t>> picked;
    for (std::size_t i : keep) picked.push_back(combos[i]);
    combos = std::move(picked);
  }
  std::vector<RankTuple> tuples;
  tuples.reserve(combos.size());
  for (auto& combo : combos) {
    std::sort(combo.begin(), combo.end(), [&](std::size_t a, std::size_t b) {
      return items[a].second > items[b].second;
    });
    std::vector<std::string> members;
    for (std::size_t i : combo) members.push_back(items[i].first);
    tuples.emplace_back(group_id, std::move(members));
  }
  return tuples;
}

std::optional<double> human_score(const CheckedGroup& group,
                                  const std::string& candidate_id) {
  const auto anns = group.annotations_for(candidate_id);
  if (anns.empty()) return std::nullopt;
  double total = 0.0;
  for (const auto& a : anns) total += a.sum();
  return total / static_cast<double>(anns.size());
}

std::vector<RankTuple> annotation_tuples(const CheckedGroup& group,
                                         std::size_t k, std::size_t max_count,
                                         std::uint64_t seed) {
  std::vector<std::pair<std::string, double>> scored;
  for (const auto& c : group.candidates()) {
    if (auto h = human_score(group, c.candidate_id())) {
      scored.emplace_back(c.candidate_id(), *h);
    }
  }
  return build_tuples(group.group_id(), scored, k, max_count, seed);
}

EvalReport evaluate(const Scorer& scorer, std::span<const CheckedGroup> groups,
                    const std::vector<RankTuple>* tuples,
                    const EvalConfig& config, std::uint64_t model_digest) {
  config.validate();
  EvalReport report;
  report.tie_margin = config.tie_margin;
  report.config_digest = fnv1a64(
      nlohmann::json{{"model_digest", model_digest},
                     {"tie_margin", config.tie_margin},
                     {"random_baseline_trials", config.random_baseline_trials},
                     {"seed", config.seed},
                     {"tuples", tuples != nullptr ? tuples->size() : 0}}
          .dump());

  std::vector<PreferencePair> pairs;
  std::vector<PreferencePair> strict;
  for (const auto& g : groups) {
    for (auto& p : build_pairs(g, config.seed)) {
      if (p.label() != PairLabel::Tie) strict.push_back(p);
      pairs.push_back(std::move(p));
    }
  }
  report.tie_pairs = pairs.size() - strict.size();
  report.pairwise = pairwise_accuracy(scorer, pairs, config.tie_margin);
  report.pairwise_strict = pairwise_accuracy(scorer, strict, config.tie_margin);
  if (tuples != nullptr) report.multiway = multiway_accuracy(scorer, *tuples);

  std::vector<double> model_scores, human_scores;
  std::vector<std::string> ids;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates()) {
      ids.push_back(c.candidate_id());
      if (auto h = human_score(g, c.candidate_id())) {
        model_scores.push_back(call_scorer(scorer, c.candidate_id()));
        human_scores.push_back(*h);
      }
    }
  }
  report.spearman_items = model_scores.size();
  try {
    report.spearman_overall = spearman(model_scores, human_scores);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
  }

  if (config.random_baseline_trials > 0) {
    std::mt19937_64 rng(splitmix64(config.seed ^ 0x72616e64ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::map<std::string, double> random_scores;
    Scorer random_scorer = [&](const std::string& id) {
      return random_scores.at(id);
    };
    double pairwise_total = 0.0;
    std::map<std::size_t, double> multiway_total;
    for (std::size_t t = 0; t < config.random_baseline_trials; ++t) {
      for (const auto& id : ids) random_scores[id] = unit(rng);
      pairwise_total +=
          pairwise_accuracy(random_scorer, pairs, config.tie_margin).accuracy();
      if (tuples != nullptr) {
        for (const auto& [k, count] :
             multiway_accuracy(random_scorer, *tuples).per_k) {
          multiway_total[k] += count.accuracy();
        }
      }
    }
    const double trials = static_cast<double>(config.random_baseline_trials);
    report.random_pairwise = pairwise_total / trials;
    for (const auto& [k, total] : multiway_total) {
      report.random_multiway[k] = total / trials;
    }
  }
  return report;
}

namespace {

nlohmann::json to_json(const AccuracyCount& c) {
  return {{"accuracy", c.accuracy()}, {"correct", c.correct},
          {"total", c.total}};
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["config_digest"] = digest_hex(r.config_digest);
  j["tie_margin"] = r.tie_margin;
  j["pairwise"] = to_json(r.pairwise);
  j["pairwise"]["tie_pairs"] = r.tie_pairs;
  j["pairwise_strict"] = to_json(r.pairwise_strict);
  if (r.multiway) {
    nlohmann::json m;
    for (const auto& [k, count] : r.multiway->per_k) {
      m[std::to_string(k)] = to_json(count);
    }
    m["overall"] = to_json(r.multiway->overall);
    j["multiway"] = m;
  }
  j["spearman"] = {{"items", r.spearman_items}};
  j["spearman"]["rho"] = r.spearman_overall ? nlohmann::json(*r.spearman_overall)
                                            : nlohmann::json(nullptr);
  nlohmann::json baseline = {{"pairwise", r.random_pairwise}};
  if (!r.random_multiway.empty()) {
    for (const auto& [k, acc] : r.random_multiway) {
      baseline["multiway"][std::to_string(k)] = acc;
    }
  }
  j["random_baseline"] = baseline;
  return j;
}

}  // namespace prefrank
