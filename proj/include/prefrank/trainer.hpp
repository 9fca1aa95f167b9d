#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prefrank/core.hpp"
#include "prefrank/model.hpp"

namespace prefrank {

// Peak learning rate used when the whole backbone is fine-tuned alongside the
// head. Kept for reference; head-only training defaults to 1e-3.
inline constexpr double kFullModelPeakLr = 2e-6;

struct TrainConfig {
  int epochs = 2;
  int batch_size = 16;
  double peak_lr = 1e-3;
  double warmup_ratio = 0.05;
  double weight_decay = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossConfig loss;
  std::vector<std::size_t> hidden = {64};
  HeadMode head_mode = HeadMode::Multiple;
  bool tie_decomposition = true;
  bool feature_standardize = false;
  // 0 keeps all C(n, 2) pairs of a group.
  std::size_t max_pairs_per_group = 0;
  double validation_fraction = 0.1;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Strict parsing: unknown keys and wrong types raise InvalidConfig. Missing
// keys keep their defaults; `base` supplies those defaults.
TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const TrainConfig& base = {});
nlohmann::json to_json(const TrainConfig& config);
std::uint64_t config_digest(const TrainConfig& config);

// All C(n, 2) pairs of the group labeled by comparing z1 + z2 under a shared
// annotator. Pair orientation is drawn from a stream keyed by (seed, group).
std::vector<PreferencePair> build_pairs(const CheckedGroup& group,
                                        std::uint64_t seed,
                                        std::size_t max_pairs = 0);

// A tie qualifies when the two candidates win on opposite dimensions. Each
// qualifying tie becomes an APreferred and a BPreferred sample; other ties
// are dropped; non-tie pairs pass through in order.
std::vector<PreferencePair> decompose_ties(
    std::span<const PreferencePair> pairs,
    std::span<const CheckedGroup> groups);

bool tie_qualifies(const DimensionalAnnotation& a,
                   const DimensionalAnnotation& b);

std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio);

// Linear warmup from 0 over ceil(warmup_ratio * total) steps, then cosine
// decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& config);

// AdamW with decoupled weight decay, applied to every parameter.
class AdamW {
 public:
  AdamW(std::size_t size, double beta1, double beta2, double eps,
        double weight_decay);

  void step(std::span<double> params, std::span<const double> grad, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct Standardization {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static Standardization fit(std::span<const CheckedGroup> groups);
  std::vector<double> apply(std::span<const double> feature) const;
  friend bool operator==(const Standardization&,
                         const Standardization&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainReport {
  LossKind loss_kind = LossKind::RankNLL;
  std::size_t train_groups = 0;
  std::size_t validation_groups = 0;
  std::size_t annotated_pairs = 0;
  std::size_t tie_pairs = 0;
  std::size_t decomposed_samples = 0;
  std::size_t dropped_ties = 0;
  std::size_t training_samples = 0;
  std::size_t validation_pairs = 0;
  std::size_t total_steps = 0;
  double initial_loss = 0.0;
  std::optional<double> initial_val_accuracy;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const TrainReport& report);

struct TrainedModel {
  HeadParams params;
  LossConfig loss;
  std::optional<Standardization> standardization;
  std::uint64_t config_digest = 0;
  TrainReport report;

  GaussianScore score(std::span<const double> feature) const;
};

// Groups sorted by id; the last floor(fraction * n) become the validation
// split (at least one when fraction > 0 and n >= 2).
std::pair<std::vector<CheckedGroup>, std::vector<CheckedGroup>>
split_validation(std::vector<CheckedGroup> groups, double fraction);

TrainedModel train(std::span<const CheckedGroup> train_groups,
                   const TrainConfig& config,
                   std::span<const CheckedGroup> validation_groups = {});

}  // namespace prefrank
