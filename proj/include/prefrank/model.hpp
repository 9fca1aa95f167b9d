#pragma once

// Reward head math: MLP forward pass, per-dimension Gaussian outputs,
// aggregation, probit preference probability, the ranking and regression
// losses, and their analytic gradients.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "prefrank/core.hpp"

namespace prefrank {

enum class HeadMode { Shared, Multiple };
enum class LossKind { RankNLL, Regression, PointwiseOnly };

std::string_view to_string(HeadMode mode);
std::string_view to_string(LossKind kind);
HeadMode parse_head_mode(std::string_view name);
LossKind parse_loss_kind(std::string_view name);

// T(z) = (z + shift) * scale. The default maps Likert sums [2, 8] onto [-1, 1].
struct AffineTransform {
  double scale = 1.0 / 3.0;
  double shift = -5.0;

  double operator()(double z) const { return (z + shift) * scale; }
  friend bool operator==(const AffineTransform&,
                         const AffineTransform&) = default;
};

struct LossConfig {
  LossKind loss_kind = LossKind::RankNLL;
  AggregationStrategy strategy = AggregationStrategy::Mean;
  double sigma_floor = 1e-3;
  AffineTransform regression_transform;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct ScalarGaussian {
  double mu = 0.0;
  double sigma = 1.0;
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Shape of the head. Shared: one trunk ending in 4 outputs
// (raw_mu_1, raw_sigma_1, raw_mu_2, raw_sigma_2). Multiple: one trunk per
// dimension, each ending in (raw_mu_d, raw_sigma_d). Hidden layers use tanh;
// the output layer is linear.
struct HeadArchitecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden = {64};
  HeadMode mode = HeadMode::Multiple;

  std::size_t num_trunks() const { return mode == HeadMode::Shared ? 1 : 2; }
  std::size_t outputs_per_trunk() const {
    return mode == HeadMode::Shared ? 4 : 2;
  }
  std::vector<LayerShape> trunk_layers() const;
  std::size_t trunk_parameter_count() const;
  std::size_t parameter_count() const;

  friend bool operator==(const HeadArchitecture&,
                         const HeadArchitecture&) = default;
};

// Flat parameter vector. Layout: trunks in order; within a trunk, layers in
// order; within a layer, the row-major (out x in) weight matrix then the bias.
class HeadParams {
 public:
  HeadParams(HeadArchitecture arch, std::vector<double> values);

  static HeadParams zeros(const HeadArchitecture& arch);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static HeadParams random(const HeadArchitecture& arch, std::uint64_t seed);

  const HeadArchitecture& architecture() const { return arch_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }

  // Offset of layer `layer` of trunk `trunk` (weights first, then bias).
  std::size_t layer_offset(std::size_t trunk, std::size_t layer) const;

  bool all_finite() const;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;

 private:
  HeadArchitecture arch_;
  std::vector<double> values_;
};

double softplus(double x);
double sigmoid(double x);

// (mu_1, sigma_1, mu_2, sigma_2) with sigma_d = softplus(raw_sigma_d) + floor.
DimensionalGaussian head_forward(std::span<const double> feature,
                                 const HeadParams& params, double sigma_floor);

// Min: sigma of the minimizing dimension (ties go to dimension 1).
// Mean: sqrt(s1^2 + s2^2) / 2. Sum: sqrt(s1^2 + s2^2).
ScalarGaussian aggregate(const std::array<double, kNumDimensions>& mu,
                         const std::array<double, kNumDimensions>& sigma,
                         AggregationStrategy strategy);

// P(high > low) = Phi((mu_h - mu_l) / sqrt(sigma_h^2 + sigma_l^2)).
double preference_prob(const ScalarGaussian& high, const ScalarGaussian& low);
double log_preference_prob(const ScalarGaussian& high,
                           const ScalarGaussian& low);

// -log P(winner > loser) for the labeled winner of (a, b).
double rank_nll(const GaussianScore& a, const GaussianScore& b,
                PairLabel label);

// ((mu_1 + mu_2) - T(z1 + z2))^2
double regression_loss(const std::array<double, kNumDimensions>& mu, int z1,
                       int z2, const AffineTransform& transform);

// Per-dimension pointwise baseline: sum_d (mu_d - t_d)^2 with
// t_d = (z_d + shift / 2) * scale, so that t_1 + t_2 = T(z1 + z2).
double pointwise_loss(const std::array<double, kNumDimensions>& mu, int z1,
                      int z2, const AffineTransform& transform);

struct RankItem {
  std::span<const double> winner;
  std::span<const double> loser;
};

struct PointItem {
  std::span<const double> feature;
  int z1 = 0;
  int z2 = 0;
};

// RankNLL consumes `pairs`; Regression and PointwiseOnly consume `points`.
struct Batch {
  std::vector<RankItem> pairs;
  std::vector<PointItem> points;
};

// Mean loss over the batch items the configured loss consumes.
double batch_loss(const HeadParams& params, const LossConfig& config,
                  const Batch& batch);

// Mean loss plus its exact gradient with respect to every parameter; `grad`
// is resized to params.size() and overwritten.
double backward(const HeadParams& params, const LossConfig& config,
                const Batch& batch, std::vector<double>& grad);

}  // namespace prefrank
