#include "prefrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "prefrank/normal.hpp"

namespace prefrank {

std::string_view to_string(HeadMode mode) {
  return mode == HeadMode::Shared ? "Shared" : "Multiple";
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::RankNLL: return "RankNLL";
    case LossKind::Regression: return "Regression";
    case LossKind::PointwiseOnly: return "PointwiseOnly";
  }
  return "Unknown";
}

HeadMode parse_head_mode(std::string_view name) {
  if (name == "Shared") return HeadMode::Shared;
  if (name == "Multiple") return HeadMode::Multiple;
  throw Error(ErrorCode::InvalidConfig,
              "unknown head mode '" + std::string(name) + "'");
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "RankNLL") return LossKind::RankNLL;
  if (name == "Regression") return LossKind::Regression;
  if (name == "PointwiseOnly") return LossKind::PointwiseOnly;
  throw Error(ErrorCode::InvalidConfig,
              "unknown loss kind '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(sigma_floor > 0.0) || !std::isfinite(sigma_floor)) {
    throw Error(ErrorCode::InvalidConfig, "sigma_floor must be positive");
  }
  if (regression_transform.scale == 0.0 ||
      !std::isfinite(regression_transform.scale) ||
      !std::isfinite(regression_transform.shift)) {
    throw Error(ErrorCode::InvalidConfig,
                "regression transform scale must be finite and non-zero");
  }
}

std::vector<LayerShape> HeadArchitecture::trunk_layers() const {
  std::vector<LayerShape> layers;
  std::size_t in = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back({in, width});
    in = width;
  }
  layers.push_back({in, outputs_per_trunk()});
  return layers;
}

std::size_t HeadArchitecture::trunk_parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : trunk_layers()) count += layer.out * (layer.in + 1);
  return count;
}

std::size_t HeadArchitecture::parameter_count() const {
  return num_trunks() * trunk_parameter_count();
}

namespace {

void check_architecture(const HeadArchitecture& arch) {
  if (arch.input_dim == 0) {
    throw Error(ErrorCode::InvalidConfig, "head input dimension is zero");
  }
  for (std::size_t width : arch.hidden) {
    if (width == 0) {
      throw Error(ErrorCode::InvalidConfig, "hidden layer of width zero");
    }
  }
}

}  // namespace

HeadParams::HeadParams(HeadArchitecture arch, std::vector<double> values)
    : arch_(std::move(arch)), values_(std::move(values)) {
  check_architecture(arch_);
  if (values_.size() != arch_.parameter_count()) {
    throw Error(ErrorCode::DimensionMismatch,
                "head expects " + std::to_string(arch_.parameter_count()) +
                    " parameters, got " + std::to_string(values_.size()));
  }
  if (!all_finite()) {
    throw Error(ErrorCode::NonFiniteParams, "head parameters are not finite");
  }
}

HeadParams HeadParams::zeros(const HeadArchitecture& arch) {
  check_architecture(arch);
  return HeadParams(arch, std::vector<double>(arch.parameter_count(), 0.0));
}

HeadParams HeadParams::random(const HeadArchitecture& arch,
                              std::uint64_t seed) {
  check_architecture(arch);
  std::mt19937_64 rng(seed);
  std::vector<double> values;
  values.reserve(arch.parameter_count());
  for (std::size_t t = 0; t < arch.num_trunks(); ++t) {
    for (const auto& layer : arch.trunk_layers()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t i = 0; i < layer.out * (layer.in + 1); ++i) {
        values.push_back(dist(rng));
      }
    }
  }
  return HeadParams(arch, std::move(values));
}

std::size_t HeadParams::layer_offset(std::size_t trunk,
                                     std::size_t layer) const {
  std::size_t offset = trunk * arch_.trunk_parameter_count();
  const auto layers = arch_.trunk_layers();
  for (std::size_t l = 0; l < layer; ++l) {
    offset += layers[l].out * (layers[l].in + 1);
  }
  return offset;
}

bool HeadParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// Raw head outputs in the order raw_mu_1, raw_sigma_1, raw_mu_2, raw_sigma_2.
using RawOutputs = std::array<double, 4>;

struct ForwardCache {
  // hidden[t][l] holds the post-tanh activations of hidden layer l, trunk t.
  std::vector<std::vector<std::vector<double>>> hidden;
  RawOutputs raw{};
};

void dense(std::span<const double> weights, std::span<const double> bias,
           std::span<const double> input, std::span<double> output) {
  const std::size_t in = input.size();
  for (std::size_t o = 0; o < output.size(); ++o) {
    double acc = bias[o];
    const double* row = weights.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * input[i];
    output[o] = acc;
  }
}

void forward_raw(std::span<const double> feature, const HeadParams& params,
                 ForwardCache& cache) {
  const auto& arch = params.architecture();
  const auto layers = arch.trunk_layers();
  const auto values = params.values();
  cache.hidden.assign(arch.num_trunks(), {});
  std::array<double, 4> out{};
  for (std::size_t t = 0; t < arch.num_trunks(); ++t) {
    auto& acts = cache.hidden[t];
    acts.reserve(arch.hidden.size());
    std::span<const double> input = feature;
    std::size_t offset = params.layer_offset(t, 0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& shape = layers[l];
      auto weights = values.subspan(offset, shape.out * shape.in);
      auto bias = values.subspan(offset + shape.out * shape.in, shape.out);
      offset += shape.out * (shape.in + 1);
      if (l + 1 < layers.size()) {
        std::vector<double> act(shape.out);
        dense(weights, bias, input, act);
        for (double& v : act) v = std::tanh(v);
        acts.push_back(std::move(act));
        input = acts.back();
      } else {
        dense(weights, bias, input, std::span<double>(out.data(), shape.out));
      }
    }
    if (arch.mode == HeadMode::Shared) {
      cache.raw = out;
    } else {
      cache.raw[2 * t] = out[0];
      cache.raw[2 * t + 1] = out[1];
    }
  }
}

DimensionalGaussian to_gaussian(const RawOutputs& raw, double sigma_floor) {
  DimensionalGaussian g;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    g.mu[d] = raw[2 * d];
    g.sigma[d] = softplus(raw[2 * d + 1]) + sigma_floor;
  }
  return g;
}

// Accumulates d_raw (gradient of the loss w.r.t. the raw outputs) into grad.
void backward_raw(std::span<const double> feature, const HeadParams& params,
                  const ForwardCache& cache, const RawOutputs& d_raw,
                  std::span<double> grad) {
  const auto& arch = params.architecture();
  const auto layers = arch.trunk_layers();
  const auto values = params.values();
  for (std::size_t t = 0; t < arch.num_trunks(); ++t) {
    std::vector<double> delta;
    if (arch.mode == HeadMode::Shared) {
      delta.assign(d_raw.begin(), d_raw.end());
    } else {
      delta = {d_raw[2 * t], d_raw[2 * t + 1]};
    }
    const auto& acts = cache.hidden[t];
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& shape = layers[l];
      const std::size_t offset = params.layer_offset(t, l);
      std::span<const double> input =
          l == 0 ? feature : std::span<const double>(acts[l - 1]);
      double* gw = grad.data() + offset;
      double* gb = gw + shape.out * shape.in;
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        gb[o] += d;
        double* row = gw + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) row[i] += d * input[i];
      }
      if (l == 0) break;
      std::vector<double> prev(shape.in, 0.0);
      const double* w = values.data() + offset;
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) prev[i] += row[i] * d;
      }
      for (std::size_t i = 0; i < shape.in; ++i) {
        const double h = input[i];
        prev[i] *= 1.0 - h * h;
      }
      delta = std::move(prev);
    }
  }
}

void check_feature(std::span<const double> feature, const HeadParams& params) {
  if (feature.size() != params.architecture().input_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature length " + std::to_string(feature.size()) +
                    " does not match head input width " +
                    std::to_string(params.architecture().input_dim));
  }
}

void check_sigma(double sigma) {
  if (!(sigma > 0.0)) {
    throw Error(ErrorCode::NonPositiveSigma,
                "sigma must be positive, got " + std::to_string(sigma));
  }
}

struct AggregateGrad {
  std::array<double, kNumDimensions> d_mu{};
  std::array<double, kNumDimensions> d_sigma{};
};

std::size_t min_dimension(const std::array<double, kNumDimensions>& mu) {
  return mu[1] < mu[0] ? 1 : 0;
}

AggregateGrad aggregate_backward(const DimensionalGaussian& g,
                                 AggregationStrategy strategy, double d_mu_agg,
                                 double d_sigma_agg) {
  AggregateGrad out;
  const double root = std::hypot(g.sigma[0], g.sigma[1]);
  switch (strategy) {
    case AggregationStrategy::Min: {
      const std::size_t k = min_dimension(g.mu);
      out.d_mu[k] = d_mu_agg;
      out.d_sigma[k] = d_sigma_agg;
      break;
    }
    case AggregationStrategy::Mean:
      for (std::size_t d = 0; d < kNumDimensions; ++d) {
        out.d_mu[d] = 0.5 * d_mu_agg;
        out.d_sigma[d] = d_sigma_agg * g.sigma[d] / (2.0 * root);
      }
      break;
    case AggregationStrategy::Sum:
      for (std::size_t d = 0; d < kNumDimensions; ++d) {
        out.d_mu[d] = d_mu_agg;
        out.d_sigma[d] = d_sigma_agg * g.sigma[d] / root;
      }
      break;
  }
  return out;
}

RawOutputs raw_gradient(const RawOutputs& raw,
                        const std::array<double, kNumDimensions>& d_mu,
                        const std::array<double, kNumDimensions>& d_sigma) {
  RawOutputs d{};
  for (std::size_t d_idx = 0; d_idx < kNumDimensions; ++d_idx) {
    d[2 * d_idx] = d_mu[d_idx];
    d[2 * d_idx + 1] = d_sigma[d_idx] * sigmoid(raw[2 * d_idx + 1]);
  }
  return d;
}

std::array<double, kNumDimensions> pointwise_targets(
    int z1, int z2, const AffineTransform& transform) {
  return {(z1 + 0.5 * transform.shift) * transform.scale,
          (z2 + 0.5 * transform.shift) * transform.scale};
}

void check_likert_pair(int z1, int z2) {
  for (int z : {z1, z2}) {
    if (z < kLikertMin || z > kLikertMax) {
      throw Error(ErrorCode::LikertOutOfRange,
                  "score " + std::to_string(z) + " outside [1, 4]");
    }
  }
}

std::size_t consumed_items(const LossConfig& config, const Batch& batch) {
  const std::size_t n = config.loss_kind == LossKind::RankNLL
                            ? batch.pairs.size()
                            : batch.points.size();
  if (n == 0) {
    throw Error(ErrorCode::InvalidArgument,
                std::string("batch has no items for loss ") +
                    std::string(to_string(config.loss_kind)));
  }
  return n;
}

// Loss of one item and, when `grad` is non-empty, its gradient accumulated
// with weight `weight`.
double rank_item(const HeadParams& params, const LossConfig& config,
                 const RankItem& item, double weight, std::span<double> grad) {
  check_feature(item.winner, params);
  check_feature(item.loser, params);
  ForwardCache cw, cl;
  forward_raw(item.winner, params, cw);
  forward_raw(item.loser, params, cl);
  const auto gw = to_gaussian(cw.raw, config.sigma_floor);
  const auto gl = to_gaussian(cl.raw, config.sigma_floor);
  const auto aw = aggregate(gw.mu, gw.sigma, config.strategy);
  const auto al = aggregate(gl.mu, gl.sigma, config.strategy);
  const double var = aw.sigma * aw.sigma + al.sigma * al.sigma;
  const double sc = std::sqrt(var);
  const double z = (aw.mu - al.mu) / sc;
  const double loss = -normal::log_cdf(z);
  if (grad.empty()) return loss;

  const double dz = -normal::inverse_mills(z) * weight;
  const double d_mu_w = dz / sc;
  const double d_sigma_w = -dz * z * aw.sigma / var;
  const double d_sigma_l = -dz * z * al.sigma / var;
  const auto agw = aggregate_backward(gw, config.strategy, d_mu_w, d_sigma_w);
  const auto agl = aggregate_backward(gl, config.strategy, -d_mu_w, d_sigma_l);
  backward_raw(item.winner, params, cw,
               raw_gradient(cw.raw, agw.d_mu, agw.d_sigma), grad);
  backward_raw(item.loser, params, cl,
               raw_gradient(cl.raw, agl.d_mu, agl.d_sigma), grad);
  return loss;
}

double point_item(const HeadParams& params, const LossConfig& config,
                  const PointItem& item, double weight,
                  std::span<double> grad) {
  check_feature(item.feature, params);
  check_likert_pair(item.z1, item.z2);
  ForwardCache cache;
  forward_raw(item.feature, params, cache);
  const auto g = to_gaussian(cache.raw, config.sigma_floor);
  std::array<double, kNumDimensions> d_mu{};
  double loss = 0.0;
  if (config.loss_kind == LossKind::Regression) {
    const double r = (g.mu[0] + g.mu[1]) -
                     config.regression_transform(item.z1 + item.z2);
    loss = r * r;
    d_mu = {2.0 * r * weight, 2.0 * r * weight};
  } else {
    const auto t = pointwise_targets(item.z1, item.z2,
                                     config.regression_transform);
    for (std::size_t d = 0; d < kNumDimensions; ++d) {
      const double r = g.mu[d] - t[d];
      loss += r * r;
      d_mu[d] = 2.0 * r * weight;
    }
  }
  if (!grad.empty()) {
    backward_raw(item.feature, params, cache,
                 raw_gradient(cache.raw, d_mu, {0.0, 0.0}), grad);
  }
  return loss;
}

double run_batch(const HeadParams& params, const LossConfig& config,
                 const Batch& batch, std::span<double> grad) {
  config.validate();
  if (!params.all_finite()) {
    throw Error(ErrorCode::NonFiniteParams, "head parameters are not finite");
  }
  const std::size_t n = consumed_items(config, batch);
  const double weight = 1.0 / static_cast<double>(n);
  double total = 0.0;
  if (config.loss_kind == LossKind::RankNLL) {
    for (const auto& item : batch.pairs) {
      total += rank_item(params, config, item, weight, grad);
    }
  } else {
    for (const auto& item : batch.points) {
      total += point_item(params, config, item, weight, grad);
    }
  }
  return total * weight;
}

}  // namespace

DimensionalGaussian head_forward(std::span<const double> feature,
                                 const HeadParams& params, double sigma_floor) {
  check_feature(feature, params);
  if (!params.all_finite()) {
    throw Error(ErrorCode::NonFiniteParams, "head parameters are not finite");
  }
  ForwardCache cache;
  forward_raw(feature, params, cache);
  return to_gaussian(cache.raw, sigma_floor);
}

ScalarGaussian aggregate(const std::array<double, kNumDimensions>& mu,
                         const std::array<double, kNumDimensions>& sigma,
                         AggregationStrategy strategy) {
  check_sigma(sigma[0]);
  check_sigma(sigma[1]);
  switch (strategy) {
    case AggregationStrategy::Min: {
      const std::size_t k = min_dimension(mu);
      return {mu[k], sigma[k]};
    }
    case AggregationStrategy::Mean:
      return {0.5 * (mu[0] + mu[1]), 0.5 * std::hypot(sigma[0], sigma[1])};
    case AggregationStrategy::Sum:
      return {mu[0] + mu[1], std::hypot(sigma[0], sigma[1])};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown aggregation strategy");
}

namespace {

double probit_argument(const ScalarGaussian& high, const ScalarGaussian& low) {
  check_sigma(high.sigma);
  check_sigma(low.sigma);
  return (high.mu - low.mu) / std::hypot(high.sigma, low.sigma);
}

}  // namespace

double preference_prob(const ScalarGaussian& high, const ScalarGaussian& low) {
  return normal::cdf(probit_argument(high, low));
}

double log_preference_prob(const ScalarGaussian& high,
                           const ScalarGaussian& low) {
  return normal::log_cdf(probit_argument(high, low));
}

double rank_nll(const GaussianScore& a, const GaussianScore& b,
                PairLabel label) {
  if (label == PairLabel::Tie) {
    throw Error(ErrorCode::TieLabelRejected,
                "tie pairs must be decomposed or dropped before rank_nll");
  }
  const ScalarGaussian sa{a.mu_agg(), a.sigma_agg()};
  const ScalarGaussian sb{b.mu_agg(), b.sigma_agg()};
  return label == PairLabel::APreferred ? -log_preference_prob(sa, sb)
                                        : -log_preference_prob(sb, sa);
}

double regression_loss(const std::array<double, kNumDimensions>& mu, int z1,
                       int z2, const AffineTransform& transform) {
  check_likert_pair(z1, z2);
  const double r = (mu[0] + mu[1]) - transform(z1 + z2);
  return r * r;
}

double pointwise_loss(const std::array<double, kNumDimensions>& mu, int z1,
                      int z2, const AffineTransform& transform) {
  check_likert_pair(z1, z2);
  const auto t = pointwise_targets(z1, z2, transform);
  double loss = 0.0;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    loss += (mu[d] - t[d]) * (mu[d] - t[d]);
  }
  return loss;
}

double batch_loss(const HeadParams& params, const LossConfig& config,
                  const Batch& batch) {
  return run_batch(params, config, batch, {});
}

double backward(const HeadParams& params, const LossConfig& config,
                const Batch& batch, std::vector<double>& grad) {
  grad.assign(params.size(), 0.0);
  return run_batch(params, config, batch, grad);
}

}  // namespace prefrank
