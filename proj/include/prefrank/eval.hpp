#pragma once

// Evaluation protocols: pairwise accuracy with a tie margin, all-or-nothing
// multi-way tuple accuracy, Spearman correlation, inter-rater agreement and
// the positional-bias probe.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefrank/core.hpp"

namespace prefrank {

using Scorer = std::function<double(const std::string& candidate_id)>;
using Judge =
    std::function<PairLabel(const std::string& a, const std::string& b)>;

struct EvalConfig {
  double tie_margin = 0.0;
  std::size_t random_baseline_trials = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
  }
};

// APreferred if s_a - s_b > margin, BPreferred if < -margin, else Tie.
PairLabel predict_label(double score_a, double score_b, double tie_margin);

AccuracyCount pairwise_accuracy(const Scorer& scorer,
                                std::span<const PreferencePair> pairs,
                                double tie_margin = 0.0);

struct MultiwayResult {
  std::map<std::size_t, AccuracyCount> per_k;
  AccuracyCount overall;
};

// A tuple is correct iff every (better, worse) member pair is strictly
// ordered by the scorer.
MultiwayResult multiway_accuracy(const Scorer& scorer,
                                 std::span<const RankTuple> tuples);

// Fraction of (better, worse) constituent pairs ordered correctly, over all
// tuples of size k (every size when k is nullopt).
AccuracyCount constituent_pair_accuracy(const Scorer& scorer,
                                        std::span<const RankTuple> tuples,
                                        std::optional<std::size_t> k = {});

// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average-rank vectors.
double spearman(std::span<const double> x, std::span<const double> y);

enum class AgreementMode { PairwiseMean, LeaveOneOut };

// PairwiseMean: mean Spearman over rater pairs. LeaveOneOut: mean Spearman of
// each rater against the average of the others.
double human_to_human(std::span<const std::vector<double>> ratings,
                      AgreementMode mode = AgreementMode::PairwiseMean);

struct PositionBiasResult {
  double acc_left = 0.0;
  double acc_right = 0.0;
  double gap = 0.0;
  std::size_t pairs = 0;
};

// Runs the judge once with every ground-truth winner in slot a and once with
// it in slot b. Tie-labeled pairs are skipped.
PositionBiasResult position_bias_probe(const Judge& judge,
                                       std::span<const PreferencePair> pairs);

Judge judge_from_scorer(Scorer scorer, double tie_margin = 0.0);

// Strictly ordered tuples of size k from candidate scores: every k-subset
// whose members have pairwise-distinct scores, ordered best to worst, at most
// `max_count` of them sampled without replacement (0 keeps all).
std::vector<RankTuple> build_tuples(
    const std::string& group_id,
    const std::vector<std::pair<std::string, double>>& scored, std::size_t k,
    std::size_t max_count, std::uint64_t seed);

// Tuples ranked by mean annotated Likert sum.
std::vector<RankTuple> annotation_tuples(const CheckedGroup& group,
                                         std::size_t k, std::size_t max_count,
                                         std::uint64_t seed);

// Mean Likert sum over a candidate's annotations; nullopt if unannotated.
std::optional<double> human_score(const CheckedGroup& group,
                                  const std::string& candidate_id);

struct EvalReport {
  double tie_margin = 0.0;
  std::uint64_t config_digest = 0;
  AccuracyCount pairwise;
  AccuracyCount pairwise_strict;
  std::size_t tie_pairs = 0;
  std::optional<MultiwayResult> multiway;
  std::optional<double> spearman_overall;
  std::size_t spearman_items = 0;
  double random_pairwise = 0.0;
  std::map<std::size_t, double> random_multiway;
};

// Pairwise accuracy over all annotated pairs of the groups, multi-way
// accuracy when tuples are supplied, Spearman against mean Likert sums, and
// simulated uniform-random baselines.
EvalReport evaluate(const Scorer& scorer, std::span<const CheckedGroup> groups,
                    const std::vector<RankTuple>* tuples,
                    const EvalConfig& config, std::uint64_t model_digest);

nlohmann::json to_json(const EvalReport& report);

}  // namespace prefrank
