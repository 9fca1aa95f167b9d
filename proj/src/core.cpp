#include "prefrank/core.hpp"

#include <algorithm>
#include <cmath>

#include "prefrank/model.hpp"

namespace prefrank {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingCandidate: return "MissingCandidate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateAnnotation: return "DuplicateAnnotation";
    case ErrorCode::LikertOutOfRange: return "LikertOutOfRange";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteParams: return "NonFiniteParams";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::TieLabelRejected: return "TieLabelRejected";
    case ErrorCode::UnannotatedCandidate: return "UnannotatedCandidate";
    case ErrorCode::MissingAnnotation: return "MissingAnnotation";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownCandidateInIndex: return "UnknownCandidateInIndex";
    case ErrorCode::MissingFeatureRow: return "MissingFeatureRow";
    case ErrorCode::HeaderCorrupt: return "HeaderCorrupt";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ScorerFailure: return "ScorerFailure";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::JudgeFailure: return "JudgeFailure";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string_view to_string(AggregationStrategy strategy) {
  switch (strategy) {
    case AggregationStrategy::Min: return "Min";
    case AggregationStrategy::Mean: return "Mean";
    case AggregationStrategy::Sum: return "Sum";
  }
  return "Unknown";
}

std::string_view to_string(PairLabel label) {
  switch (label) {
    case PairLabel::APreferred: return "APreferred";
    case PairLabel::BPreferred: return "BPreferred";
    case PairLabel::Tie: return "Tie";
  }
  return "Unknown";
}

std::string_view to_string(PairOrigin origin) {
  return origin == PairOrigin::Annotated ? "Annotated" : "TieDecomposed";
}

AggregationStrategy parse_strategy(std::string_view name) {
  if (name == "Min") return AggregationStrategy::Min;
  if (name == "Mean") return AggregationStrategy::Mean;
  if (name == "Sum") return AggregationStrategy::Sum;
  throw Error(ErrorCode::InvalidConfig,
              "unknown aggregation strategy '" + std::string(name) + "'");
}

EditCandidate::EditCandidate(std::string candidate_id, std::string group_id,
                             std::string generator_tag,
                             std::vector<double> feature)
    : candidate_id_(std::move(candidate_id)),
      group_id_(std::move(group_id)),
      generator_tag_(std::move(generator_tag)),
      feature_(std::move(feature)) {
  if (candidate_id_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "empty candidate_id");
  }
  if (group_id_.empty()) {
    throw Error(ErrorCode::InvalidArgument,
                "empty group_id for candidate " + candidate_id_);
  }
  if (feature_.empty()) {
    throw Error(ErrorCode::DimensionMismatch,
                "empty feature for candidate " + candidate_id_);
  }
  for (double v : feature_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::InvalidArgument,
                  "non-finite feature entry for candidate " + candidate_id_);
    }
  }
}

namespace {

void check_likert(int z, const std::string& candidate_id) {
  if (z < kLikertMin || z > kLikertMax) {
    throw Error(ErrorCode::LikertOutOfRange,
                "score " + std::to_string(z) + " for candidate " +
                    candidate_id + " outside [1, 4]");
  }
}

}  // namespace

DimensionalAnnotation::DimensionalAnnotation(std::string candidate_id, int z1,
                                             int z2, std::string annotator_id)
    : candidate_id_(std::move(candidate_id)),
      z1_(z1),
      z2_(z2),
      annotator_id_(std::move(annotator_id)) {
  if (candidate_id_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "annotation with empty candidate_id");
  }
  check_likert(z1_, candidate_id_);
  check_likert(z2_, candidate_id_);
}

GaussianScore::GaussianScore(const DimensionalGaussian& dims,
                             AggregationStrategy strategy)
    : dims_(dims), strategy_(strategy) {
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    if (!std::isfinite(dims.mu[d]) || !std::isfinite(dims.sigma[d])) {
      throw Error(ErrorCode::NonFiniteParams, "non-finite Gaussian score");
    }
  }
  const auto [mu_agg, sigma_agg] = aggregate(dims.mu, dims.sigma, strategy);
  mu_agg_ = mu_agg;
  sigma_agg_ = sigma_agg;
}

PreferencePair::PreferencePair(std::string group_id, std::string a,
                               std::string b, PairLabel label,
                               PairOrigin origin)
    : group_id_(std::move(group_id)),
      a_(std::move(a)),
      b_(std::move(b)),
      label_(label),
      origin_(origin) {
  if (a_ == b_) {
    throw Error(ErrorCode::InvalidArgument,
                "pair compares candidate " + a_ + " with itself");
  }
}

PreferencePair PreferencePair::swapped() const {
  PairLabel flipped = label_;
  if (label_ == PairLabel::APreferred) flipped = PairLabel::BPreferred;
  if (label_ == PairLabel::BPreferred) flipped = PairLabel::APreferred;
  return PreferencePair(group_id_, b_, a_, flipped, origin_);
}

RankTuple::RankTuple(std::string group_id, std::vector<std::string> members)
    : group_id_(std::move(group_id)), members_(std::move(members)) {
  if (members_.size() < 2 || members_.size() > 4) {
    throw Error(ErrorCode::InvalidArgument,
                "tuple in group " + group_id_ + " has size " +
                    std::to_string(members_.size()) + ", expected 2..4");
  }
  for (std::size_t i = 0; i < members_.size(); ++i) {
    for (std::size_t j = i + 1; j < members_.size(); ++j) {
      if (members_[i] == members_[j]) {
        throw Error(ErrorCode::DuplicateId,
                    "tuple repeats candidate " + members_[i]);
      }
    }
  }
}

const EditCandidate* CheckedGroup::find(std::string_view candidate_id) const {
  auto it = std::lower_bound(
      candidates_.begin(), candidates_.end(), candidate_id,
      [](const EditCandidate& c, std::string_view id) {
        return c.candidate_id() < id;
      });
  if (it == candidates_.end() || it->candidate_id() != candidate_id) {
    return nullptr;
  }
  return &*it;
}

std::span<const DimensionalAnnotation> CheckedGroup::annotations_for(
    std::string_view candidate_id) const {
  auto [lo, hi] = std::equal_range(
      annotations_.begin(), annotations_.end(), candidate_id,
      [](const auto& lhs, const auto& rhs) {
        auto key = [](const auto& v) -> std::string_view {
          if constexpr (std::is_same_v<std::decay_t<decltype(v)>,
                                       DimensionalAnnotation>) {
            return v.candidate_id();
          } else {
            return v;
          }
        };
        return key(lhs) < key(rhs);
      });
  return {annotations_.data() + (lo - annotations_.begin()),
          static_cast<std::size_t>(hi - lo)};
}

std::optional<std::pair<DimensionalAnnotation, DimensionalAnnotation>>
CheckedGroup::shared_annotations(std::string_view a, std::string_view b) const {
  auto lhs = annotations_for(a);
  auto rhs = annotations_for(b);
  // Both ranges are sorted by annotator_id.
  auto i = lhs.begin();
  auto j = rhs.begin();
  while (i != lhs.end() && j != rhs.end()) {
    if (i->annotator_id() < j->annotator_id()) {
      ++i;
    } else if (j->annotator_id() < i->annotator_id()) {
      ++j;
    } else {
      return std::make_pair(*i, *j);
    }
  }
  return std::nullopt;
}

CheckedGroup validate_group(std::vector<EditCandidate> candidates,
                            std::vector<DimensionalAnnotation> annotations) {
  if (candidates.empty()) {
    throw Error(ErrorCode::InvalidArgument, "group has no candidates");
  }
  CheckedGroup group;
  group.group_id_ = candidates.front().group_id();
  group.dim_ = candidates.front().dim();

  std::sort(candidates.begin(), candidates.end(),
            [](const EditCandidate& x, const EditCandidate& y) {
              return x.candidate_id() < y.candidate_id();
            });
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.group_id() != group.group_id_) {
      throw Error(ErrorCode::InvalidArgument,
                  "candidate " + c.candidate_id() + " belongs to group " +
                      c.group_id() + ", not " + group.group_id_);
    }
    if (c.dim() != group.dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "candidate " + c.candidate_id() + " has feature length " +
                      std::to_string(c.dim()) + ", expected " +
                      std::to_string(group.dim_));
    }
    if (i > 0 && candidates[i - 1].candidate_id() == c.candidate_id()) {
      throw Error(ErrorCode::DuplicateId,
                  "candidate " + c.candidate_id() + " appears twice in group " +
                      group.group_id_);
    }
  }
  group.candidates_ = std::move(candidates);

  std::sort(annotations.begin(), annotations.end(),
            [](const DimensionalAnnotation& x, const DimensionalAnnotation& y) {
              if (x.candidate_id() != y.candidate_id()) {
                return x.candidate_id() < y.candidate_id();
              }
              return x.annotator_id() < y.annotator_id();
            });
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& ann = annotations[i];
    if (group.find(ann.candidate_id()) == nullptr) {
      throw Error(ErrorCode::MissingCandidate,
                  "annotation references unknown candidate " +
                      ann.candidate_id() + " in group " + group.group_id_);
    }
    if (i > 0 && annotations[i - 1].candidate_id() == ann.candidate_id() &&
        annotations[i - 1].annotator_id() == ann.annotator_id()) {
      throw Error(ErrorCode::DuplicateAnnotation,
                  "candidate " + ann.candidate_id() +
                      " annotated twice by annotator '" + ann.annotator_id() +
                      "'");
    }
  }
  group.annotations_ = std::move(annotations);
  return group;
}

}  // namespace prefrank
