#include "prefrank/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "prefrank/digest.hpp"
#include "prefrank/eval.hpp"

namespace prefrank {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, what);
  };
  if (epochs < 1) fail("epochs must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) {
    fail("peak_lr must be positive and finite");
  }
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) {
    fail("warmup_ratio must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    fail("weight_decay must be non-negative");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    fail("validation_fraction must lie in [0, 1)");
  }
  for (std::size_t width : hidden) {
    if (width == 0) fail("hidden widths must be positive");
  }
  loss.validate();
}

namespace {

template <typename T>
T read_key(const nlohmann::json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig,
                std::string("config key '") + key + "': " + e.what());
  }
}

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "epochs",          "batch_size",          "peak_lr",
      "warmup_ratio",    "weight_decay",        "adam_beta1",
      "adam_beta2",      "adam_eps",            "seed",
      "loss_kind",       "strategy",            "sigma_floor",
      "regression_scale", "regression_shift",   "hidden",
      "head_mode",       "tie_decomposition",   "feature_standardize",
      "max_pairs_per_group", "validation_fraction"};
  return keys;
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const TrainConfig& base) {
  if (!j.is_object()) {
    throw Error(ErrorCode::InvalidConfig, "train config must be a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!known_config_keys().contains(item.key())) {
      throw Error(ErrorCode::InvalidConfig,
                  "unknown config key '" + item.key() + "'");
    }
  }
  TrainConfig c = base;
  c.epochs = read_key(j, "epochs", c.epochs);
  c.batch_size = read_key(j, "batch_size", c.batch_size);
  c.peak_lr = read_key(j, "peak_lr", c.peak_lr);
  c.warmup_ratio = read_key(j, "warmup_ratio", c.warmup_ratio);
  c.weight_decay = read_key(j, "weight_decay", c.weight_decay);
  c.adam_beta1 = read_key(j, "adam_beta1", c.adam_beta1);
  c.adam_beta2 = read_key(j, "adam_beta2", c.adam_beta2);
  c.adam_eps = read_key(j, "adam_eps", c.adam_eps);
  c.seed = read_key(j, "seed", c.seed);
  c.loss.loss_kind = parse_loss_kind(read_key<std::string>(
      j, "loss_kind", std::string(to_string(c.loss.loss_kind))));
  c.loss.strategy = parse_strategy(read_key<std::string>(
      j, "strategy", std::string(to_string(c.loss.strategy))));
  c.loss.sigma_floor = read_key(j, "sigma_floor", c.loss.sigma_floor);
  c.loss.regression_transform.scale =
      read_key(j, "regression_scale", c.loss.regression_transform.scale);
  c.loss.regression_transform.shift =
      read_key(j, "regression_shift", c.loss.regression_transform.shift);
  c.hidden = read_key(j, "hidden", c.hidden);
  c.head_mode = parse_head_mode(read_key<std::string>(
      j, "head_mode", std::string(to_string(c.head_mode))));
  c.tie_decomposition = read_key(j, "tie_decomposition", c.tie_decomposition);
  c.feature_standardize =
      read_key(j, "feature_standardize", c.feature_standardize);
  c.max_pairs_per_group =
      read_key(j, "max_pairs_per_group", c.max_pairs_per_group);
  c.validation_fraction =
      read_key(j, "validation_fraction", c.validation_fraction);
  c.validate();
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"peak_lr", c.peak_lr},
      {"warmup_ratio", c.warmup_ratio},
      {"weight_decay", c.weight_decay},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
      {"seed", c.seed},
      {"loss_kind", to_string(c.loss.loss_kind)},
      {"strategy", to_string(c.loss.strategy)},
      {"sigma_floor", c.loss.sigma_floor},
      {"regression_scale", c.loss.regression_transform.scale},
      {"regression_shift", c.loss.regression_transform.shift},
      {"hidden", c.hidden},
      {"head_mode", to_string(c.head_mode)},
      {"tie_decomposition", c.tie_decomposition},
      {"feature_standardize", c.feature_standardize},
      {"max_pairs_per_group", c.max_pairs_per_group},
      {"validation_fraction", c.validation_fraction},
  };
}

std::uint64_t config_digest(const TrainConfig& config) {
  // nlohmann::json objects iterate in sorted key order, so dump() is canonical.
  return fnv1a64(to_json(config).dump());
}

std::vector<PreferencePair> build_pairs(const CheckedGroup& group,
                                        std::uint64_t seed,
                                        std::size_t max_pairs) {
  const auto& cands = group.candidates();
  std::mt19937_64 rng(splitmix64(seed ^ fnv1a64(group.group_id())));
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      const auto& x = cands[i].candidate_id();
      const auto& y = cands[j].candidate_id();
      if (group.annotations_for(x).empty()) {
        throw Error(ErrorCode::UnannotatedCandidate,
                    "candidate " + x + " in group " + group.group_id());
      }
      if (group.annotations_for(y).empty()) {
        throw Error(ErrorCode::UnannotatedCandidate,
                    "candidate " + y + " in group " + group.group_id());
      }
      auto shared = group.shared_annotations(x, y);
      if (!shared) {
        throw Error(ErrorCode::UnannotatedCandidate,
                    "candidates " + x + " and " + y +
                        " have no annotator in common");
      }
      const int sx = shared->first.sum();
      const int sy = shared->second.sum();
      PairLabel label = sx > sy   ? PairLabel::APreferred
                        : sx < sy ? PairLabel::BPreferred
                                  : PairLabel::Tie;
      PreferencePair pair(group.group_id(), x, y, label);
      pairs.push_back((rng() & 1ULL) ? pair.swapped() : pair);
    }
  }
  if (max_pairs > 0 && pairs.size() > max_pairs) {
    std::vector<std::size_t> keep(pairs.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(max_pairs);
    std::sort(keep.begin(), keep.end());
    std::vector<PreferencePair> capped;
    capped.reserve(max_pairs);
    for (std::size_t idx : keep) capped.push_back(pairs[idx]);
    pairs = std::move(capped);
  }
  return pairs;
}

bool tie_qualifies(const DimensionalAnnotation& a,
                   const DimensionalAnnotation& b) {
  return (a.z1() > b.z1() && b.z2() > a.z2()) ||
         (b.z1() > a.z1() && a.z2() > b.z2());
}

std::vector<PreferencePair> decompose_ties(
    std::span<const PreferencePair> pairs,
    std::span<const CheckedGroup> groups) {
  std::map<std::string_view, const CheckedGroup*> by_id;
  for (const auto& g : groups) by_id.emplace(g.group_id(), &g);

  std::vector<PreferencePair> out;
  out.reserve(pairs.size());
  for (const auto& pair : pairs) {
    if (pair.label() != PairLabel::Tie) {
      out.push_back(pair);
      continue;
    }
    auto it = by_id.find(pair.group_id());
    if (it == by_id.end()) {
      throw Error(ErrorCode::MissingAnnotation,
                  "no annotations for group " + pair.group_id());
    }
    auto shared = it->second->shared_annotations(pair.a(), pair.b());
    if (!shared) {
      throw Error(ErrorCode::MissingAnnotation,
                  "tie pair " + pair.a() + " / " + pair.b() +
                      " lacks shared annotations");
    }
    if (tie_qualifies(shared->first, shared->second)) {
      out.emplace_back(pair.group_id(), pair.a(), pair.b(),
                       PairLabel::APreferred, PairOrigin::TieDecomposed);
      out.emplace_back(pair.group_id(), pair.a(), pair.b(),
                       PairLabel::BPreferred, PairOrigin::TieDecomposed);
    }
  }
  return out;
}

std::size_t warmup_steps(std::size_t total_steps, double warmup_ratio) {
  return static_cast<std::size_t>(
      std::ceil(warmup_ratio * static_cast<double>(total_steps)));
}

double lr_at(std::size_t step, std::size_t total_steps,
             const TrainConfig& config) {
  if (total_steps == 0 || step >= total_steps) return 0.0;
  const std::size_t warmup = warmup_steps(total_steps, config.warmup_ratio);
  if (step < warmup) {
    return config.peak_lr * static_cast<double>(step) /
           static_cast<double>(warmup);
  }
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  return config.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::size_t size, double beta1, double beta2, double eps,
             double weight_decay)
    : beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay),
      m_(size, 0.0),
      v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad,
                 double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] *= 1.0 - lr * weight_decay_;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

Standardization Standardization::fit(std::span<const CheckedGroup> groups) {
  Standardization s;
  std::size_t n = 0;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates()) {
      if (s.mean.empty()) {
        s.mean.assign(c.dim(), 0.0);
        s.inv_std.assign(c.dim(), 0.0);
      }
      ++n;
      // Welford update; inv_std holds the running M2 until the end.
      for (std::size_t i = 0; i < c.dim(); ++i) {
        const double delta = c.feature()[i] - s.mean[i];
        s.mean[i] += delta / static_cast<double>(n);
        s.inv_std[i] += delta * (c.feature()[i] - s.mean[i]);
      }
    }
  }
  for (double& m2 : s.inv_std) {
    const double sd = n > 0 ? std::sqrt(m2 / static_cast<double>(n)) : 0.0;
    m2 = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  return s;
}

std::vector<double> Standardization::apply(
    std::span<const double> feature) const {
  if (feature.size() != mean.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature length " + std::to_string(feature.size()) +
                    " does not match standardization width " +
                    std::to_string(mean.size()));
  }
  std::vector<double> out(feature.size());
  for (std::size_t i = 0; i < feature.size(); ++i) {
    out[i] = (feature[i] - mean[i]) * inv_std[i];
  }
  return out;
}

GaussianScore TrainedModel::score(std::span<const double> feature) const {
  if (standardization) {
    const auto z = standardization->apply(feature);
    return GaussianScore(head_forward(z, params, loss.sigma_floor),
                         loss.strategy);
  }
  return GaussianScore(head_forward(feature, params, loss.sigma_floor),
                       loss.strategy);
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.val_accuracy) row["val_accuracy"] = *e.val_accuracy;
    epochs.push_back(row);
  }
  nlohmann::json j = {
      {"loss_kind", to_string(r.loss_kind)},
      {"train_groups", r.train_groups},
      {"validation_groups", r.validation_groups},
      {"annotated_pairs", r.annotated_pairs},
      {"tie_pairs", r.tie_pairs},
      {"decomposed_samples", r.decomposed_samples},
      {"dropped_ties", r.dropped_ties},
      {"training_samples", r.training_samples},
      {"validation_pairs", r.validation_pairs},
      {"total_steps", r.total_steps},
      {"initial_loss", r.initial_loss},
      {"epochs", epochs},
  };
  if (r.initial_val_accuracy) j["initial_val_accuracy"] = *r.initial_val_accuracy;
  return j;
}

std::pair<std::vector<CheckedGroup>, std::vector<CheckedGroup>>
split_validation(std::vector<CheckedGroup> groups, double fraction) {
  std::sort(groups.begin(), groups.end(),
            [](const CheckedGroup& a, const CheckedGroup& b) {
              return a.group_id() < b.group_id();
            });
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(groups.size())));
  if (n_val == 0 && fraction > 0.0 && groups.size() >= 2) n_val = 1;
  std::vector<CheckedGroup> val(
      std::make_move_iterator(groups.end() - static_cast<long>(n_val)),
      std::make_move_iterator(groups.end()));
  groups.erase(groups.end() - static_cast<long>(n_val), groups.end());
  return {std::move(groups), std::move(val)};
}

namespace {

// Feature rows used during training, after optional standardization.
class FeatureStore {
 public:
  FeatureStore(std::span<const CheckedGroup> groups,
               const std::optional<Standardization>& standardization) {
    for (const auto& g : groups) {
      for (const auto& c : g.candidates()) {
        const std::size_t idx = rows_.size();
        rows_.push_back(standardization
                            ? standardization->apply(c.feature())
                            : std::vector<double>(c.feature().begin(),
                                                  c.feature().end()));
        index_.emplace(key(g.group_id(), c.candidate_id()), idx);
      }
    }
  }

  std::span<const double> row(const std::string& group_id,
                              const std::string& candidate_id) const {
    return rows_.at(index_.at(key(group_id, candidate_id)));
  }

 private:
  static std::string key(const std::string& g, const std::string& c) {
    return g + '\x1f' + c;
  }
  std::vector<std::vector<double>> rows_;
  std::map<std::string, std::size_t> index_;
};

struct SampleSet {
  std::vector<RankItem> pairs;
  std::vector<PointItem> points;
  std::size_t size(LossKind kind) const {
    return kind == LossKind::RankNLL ? pairs.size() : points.size();
  }
};

Batch make_batch(const SampleSet& samples, LossKind kind,
                 std::span<const std::size_t> order) {
  Batch batch;
  for (std::size_t idx : order) {
    if (kind == LossKind::RankNLL) {
      batch.pairs.push_back(samples.pairs[idx]);
    } else {
      batch.points.push_back(samples.points[idx]);
    }
  }
  return batch;
}

double full_loss(const HeadParams& params, const LossConfig& loss,
                 const SampleSet& samples) {
  Batch all;
  all.pairs = samples.pairs;
  all.points = samples.points;
  return batch_loss(params, loss, all);
}

void check_dim(std::span<const CheckedGroup> groups, std::size_t& dim) {
  for (const auto& g : groups) {
    if (dim == 0) dim = g.dim();
    if (g.dim() != dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "group " + g.group_id() + " has feature length " +
                      std::to_string(g.dim()) + ", expected " +
                      std::to_string(dim));
    }
  }
}

}  // namespace

TrainedModel train(std::span<const CheckedGroup> train_groups,
                   const TrainConfig& config,
                   std::span<const CheckedGroup> validation_groups) {
  config.validate();
  if (train_groups.empty()) {
    throw Error(ErrorCode::EmptyDataset, "no training groups");
  }
  std::size_t dim = 0;
  check_dim(train_groups, dim);
  check_dim(validation_groups, dim);

  std::optional<Standardization> standardization;
  if (config.feature_standardize) {
    standardization = Standardization::fit(train_groups);
  }
  const FeatureStore train_rows(train_groups, standardization);
  const FeatureStore val_rows(validation_groups, standardization);

  TrainReport report;
  report.loss_kind = config.loss.loss_kind;
  report.train_groups = train_groups.size();
  report.validation_groups = validation_groups.size();

  const std::uint64_t pair_seed = splitmix64(config.seed ^ 0x7061697273ULL);
  SampleSet samples;
  if (config.loss.loss_kind == LossKind::RankNLL) {
    for (const auto& g : train_groups) {
      auto pairs = build_pairs(g, pair_seed, config.max_pairs_per_group);
      report.annotated_pairs += pairs.size();
      const auto ties = static_cast<std::size_t>(
          std::count_if(pairs.begin(), pairs.end(), [](const auto& p) {
            return p.label() == PairLabel::Tie;
          }));
      report.tie_pairs += ties;
      std::vector<PreferencePair> kept;
      if (config.tie_decomposition) {
        kept = decompose_ties(pairs, std::span<const CheckedGroup>(&g, 1));
      } else {
        for (auto& p : pairs) {
          if (p.label() != PairLabel::Tie) kept.push_back(std::move(p));
        }
      }
      std::size_t decomposed = 0;
      for (const auto& p : kept) {
        if (p.origin() == PairOrigin::TieDecomposed) ++decomposed;
        const bool a_wins = p.label() == PairLabel::APreferred;
        const auto& winner = a_wins ? p.a() : p.b();
        const auto& loser = a_wins ? p.b() : p.a();
        samples.pairs.push_back({train_rows.row(g.group_id(), winner),
                                 train_rows.row(g.group_id(), loser)});
      }
      report.decomposed_samples += decomposed;
      report.dropped_ties += ties - decomposed / 2;
    }
  } else {
    for (const auto& g : train_groups) {
      for (const auto& ann : g.annotations()) {
        samples.points.push_back({train_rows.row(g.group_id(),
                                                 ann.candidate_id()),
                                  ann.z1(), ann.z2()});
      }
    }
  }
  const LossKind kind = config.loss.loss_kind;
  const std::size_t n = samples.size(kind);
  report.training_samples = n;
  if (n == 0) {
    throw Error(ErrorCode::EmptyDataset,
                "no training samples for loss " +
                    std::string(to_string(kind)));
  }

  std::vector<PreferencePair> val_pairs;
  for (const auto& g : validation_groups) {
    for (auto& p : build_pairs(g, pair_seed)) {
      if (p.label() != PairLabel::Tie) val_pairs.push_back(std::move(p));
    }
  }
  report.validation_pairs = val_pairs.size();

  HeadArchitecture arch{dim, config.hidden, config.head_mode};
  HeadParams params =
      HeadParams::random(arch, splitmix64(config.seed ^ 0x696e6974ULL));

  std::map<std::string, const CheckedGroup*> owner;
  for (const auto& g : validation_groups) {
    for (const auto& c : g.candidates()) owner.emplace(c.candidate_id(), &g);
  }
  auto val_accuracy = [&]() -> std::optional<double> {
    if (val_pairs.empty()) return std::nullopt;
    Scorer scorer = [&](const std::string& id) {
      const auto* g = owner.at(id);
      const auto row = val_rows.row(g->group_id(), id);
      return GaussianScore(head_forward(row, params, config.loss.sigma_floor),
                           config.loss.strategy)
          .mu_agg();
    };
    return pairwise_accuracy(scorer, val_pairs, 0.0).accuracy();
  };

  report.initial_loss = full_loss(params, config.loss, samples);
  report.initial_val_accuracy = val_accuracy();

  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::size_t total_steps =
      steps_per_epoch * static_cast<std::size_t>(config.epochs);
  report.total_steps = total_steps;

  AdamW optimizer(params.size(), config.adam_beta1, config.adam_beta2,
                  config.adam_eps, config.weight_decay);
  std::mt19937_64 shuffle_rng(splitmix64(config.seed ^ 0x73687566ULL));
  std::vector<std::size_t> order(n);
  std::vector<double> grad;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      const std::size_t len = std::min(bs, n - start);
      const Batch batch = make_batch(
          samples, kind, std::span<const std::size_t>(order).subspan(start, len));
      const double loss = backward(params, config.loss, batch, grad);
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::DivergedLoss,
                    "non-finite loss at step " + std::to_string(step));
      }
      optimizer.step(params.values(), grad, lr_at(step, total_steps, config));
      if (!params.all_finite()) {
        throw Error(ErrorCode::DivergedLoss,
                    "non-finite parameters after step " + std::to_string(step));
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = full_loss(params, config.loss, samples);
    if (!std::isfinite(record.train_loss)) {
      throw Error(ErrorCode::DivergedLoss,
                  "non-finite training loss after epoch " +
                      std::to_string(epoch));
    }
    record.val_accuracy = val_accuracy();
    report.epochs.push_back(record);
  }

  return TrainedModel{std::move(params), config.loss, std::move(standardization),
                      config_digest(config), std::move(report)};
}

}  // namespace prefrank
