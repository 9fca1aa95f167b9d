#pragma once

// Domain types shared by every module. Each type validates its fields on
// construction and is immutable afterwards.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prefrank/error.hpp"

namespace prefrank {

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 4;
inline constexpr std::size_t kNumDimensions = 2;

enum class AggregationStrategy { Min, Mean, Sum };
enum class PairLabel { APreferred, BPreferred, Tie };
enum class PairOrigin { Annotated, TieDecomposed };

std::string_view to_string(AggregationStrategy strategy);
std::string_view to_string(PairLabel label);
std::string_view to_string(PairOrigin origin);
AggregationStrategy parse_strategy(std::string_view name);

// One edited result in a group, represented by its backbone embedding.
class EditCandidate {
 public:
  EditCandidate(std::string candidate_id, std::string group_id,
                std::string generator_tag, std::vector<double> feature);

  const std::string& candidate_id() const { return candidate_id_; }
  const std::string& group_id() const { return group_id_; }
  const std::string& generator_tag() const { return generator_tag_; }
  std::span<const double> feature() const { return feature_; }
  std::size_t dim() const { return feature_.size(); }

  friend bool operator==(const EditCandidate&, const EditCandidate&) = default;

 private:
  std::string candidate_id_;
  std::string group_id_;
  std::string generator_tag_;
  std::vector<double> feature_;
};

// Likert scores on the two rubric dimensions: z1 instruction following,
// z2 visual quality.
class DimensionalAnnotation {
 public:
  DimensionalAnnotation(std::string candidate_id, int z1, int z2,
                        std::string annotator_id = {});

  const std::string& candidate_id() const { return candidate_id_; }
  int z1() const { return z1_; }
  int z2() const { return z2_; }
  int z(std::size_t dimension) const { return dimension == 0 ? z1_ : z2_; }
  int sum() const { return z1_ + z2_; }
  const std::string& annotator_id() const { return annotator_id_; }

  friend bool operator==(const DimensionalAnnotation&,
                         const DimensionalAnnotation&) = default;

 private:
  std::string candidate_id_;
  int z1_;
  int z2_;
  std::string annotator_id_;
};

// Per-dimension Gaussian parameters before aggregation.
struct DimensionalGaussian {
  std::array<double, kNumDimensions> mu{};
  std::array<double, kNumDimensions> sigma{};
};

// Per-dimension (mu, sigma) plus the aggregate under one strategy.
class GaussianScore {
 public:
  GaussianScore(const DimensionalGaussian& dims, AggregationStrategy strategy);

  const std::array<double, kNumDimensions>& mu() const { return dims_.mu; }
  const std::array<double, kNumDimensions>& sigma() const {
    return dims_.sigma;
  }
  double mu_agg() const { return mu_agg_; }
  double sigma_agg() const { return sigma_agg_; }
  AggregationStrategy strategy() const { return strategy_; }

 private:
  DimensionalGaussian dims_;
  double mu_agg_;
  double sigma_agg_;
  AggregationStrategy strategy_;
};

class PreferencePair {
 public:
  PreferencePair(std::string group_id, std::string a, std::string b,
                 PairLabel label, PairOrigin origin = PairOrigin::Annotated);

  const std::string& group_id() const { return group_id_; }
  const std::string& a() const { return a_; }
  const std::string& b() const { return b_; }
  PairLabel label() const { return label_; }
  PairOrigin origin() const { return origin_; }

  // Same pair with slots exchanged and the label flipped accordingly.
  PreferencePair swapped() const;

  friend bool operator==(const PreferencePair&,
                         const PreferencePair&) = default;

 private:
  std::string group_id_;
  std::string a_;
  std::string b_;
  PairLabel label_;
  PairOrigin origin_;
};

// K candidates listed best to worst under a strict ground-truth order.
class RankTuple {
 public:
  RankTuple(std::string group_id, std::vector<std::string> members);

  const std::string& group_id() const { return group_id_; }
  const std::vector<std::string>& members() const { return members_; }
  std::size_t k() const { return members_.size(); }

  friend bool operator==(const RankTuple&, const RankTuple&) = default;

 private:
  std::string group_id_;
  std::vector<std::string> members_;
};

// A group whose candidates and annotations passed validate_group. Candidates
// are held sorted by id; annotations sorted by (candidate_id, annotator_id).
class CheckedGroup {
 public:
  const std::string& group_id() const { return group_id_; }
  const std::vector<EditCandidate>& candidates() const { return candidates_; }
  const std::vector<DimensionalAnnotation>& annotations() const {
    return annotations_;
  }
  std::size_t size() const { return candidates_.size(); }
  std::size_t dim() const { return dim_; }

  const EditCandidate* find(std::string_view candidate_id) const;
  std::span<const DimensionalAnnotation> annotations_for(
      std::string_view candidate_id) const;

  // Annotations of `a` and `b` from the lexicographically smallest annotator
  // that rated both; nullopt if no annotator rated both.
  std::optional<std::pair<DimensionalAnnotation, DimensionalAnnotation>>
  shared_annotations(std::string_view a, std::string_view b) const;

  friend bool operator==(const CheckedGroup&, const CheckedGroup&) = default;

 private:
  friend CheckedGroup validate_group(std::vector<EditCandidate>,
                                     std::vector<DimensionalAnnotation>);
  CheckedGroup() = default;

  std::string group_id_;
  std::size_t dim_ = 0;
  std::vector<EditCandidate> candidates_;
  std::vector<DimensionalAnnotation> annotations_;
};

// Checks that every annotation references an existing candidate, no
// annotator rated a candidate twice, and all features share one length.
CheckedGroup validate_group(std::vector<EditCandidate> candidates,
                            std::vector<DimensionalAnnotation> annotations);

}  // namespace prefrank
