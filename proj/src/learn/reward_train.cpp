#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "octo/learn/train.hpp"

namespace octo::learn {

RewardData reward_features(const std::vector<RewardExample>& examples, int dim) {
  RewardData d;
  for (const auto& ex : examples) {
    if (ex.pair_kind == PairKind::sibling) {
      FeatureVector a = featurize_pair(ex.instruction, ex.response_i, dim);
      FeatureVector b = featurize_pair(ex.instruction, ex.response_j, dim);
      if (ex.preferred == 0) d.pairs.emplace_back(std::move(a), std::move(b));
      else d.pairs.emplace_back(std::move(b), std::move(a));
    } else {
      d.singles.emplace_back(featurize_pair(ex.instruction, ex.response_i, dim), ex.preferred);
    }
  }
  return d;
}

namespace {

void add_feature(Reward& g, const FeatureVector& x, double coeff) {
  const FeatureVector xh = l2_normalized(x);
  for (FeatureVector::InnerIterator it(xh); it; ++it) g.w(it.index()) += coeff * it.value();
  g.b += coeff;
}

}  // namespace

double reward_loss(const Reward& model, const RewardData& data, double singleton_weight, double l2, Reward* grad) {
  const double n = static_cast<double>(data.pairs.size() + data.singles.size());
  double loss = 0;
  if (grad) {
    grad->w = Eigen::VectorXd::Zero(model.w.size());
    grad->b = 0;
  }
  if (n > 0) {
    for (const auto& [win, lose] : data.pairs) {
      const double delta = model.score(win) - model.score(lose);
      loss += softplus(-delta);
      if (grad) {
        const double d = -sigmoid(-delta) / n;
        add_feature(*grad, win, d);
        add_feature(*grad, lose, -d);
      }
    }
    for (const auto& [x, label] : data.singles) {
      const double s = model.score(x);
      loss += singleton_weight * (label ? softplus(-s) : softplus(s));
      if (grad) add_feature(*grad, x, singleton_weight * (sigmoid(s) - label) / n);
    }
    loss /= n;
  }
  loss += 0.5 * l2 * model.w.squaredNorm();
  if (grad) grad->w += l2 * model.w;
  return loss;
}

double pairwise_accuracy(const Reward& model, const RewardData& data) {
  if (data.pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  int hits = 0;
  for (const auto& [win, lose] : data.pairs)
    if (model.score(win) > model.score(lose)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.pairs.size());
}

RewardTrainResult reward_train(const RewardData& train, const RewardData& heldout, const TrainConfig& cfg) {
  RewardTrainResult r;
  r.model = Reward(cfg.feature_dim);
  Reward grad(cfg.feature_dim);
  Adam adam(cfg.lr);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = reward_loss(r.model, train, cfg.singleton_weight, cfg.l2, &grad);
    if (!std::isfinite(loss)) throw DivergedLoss("reward loss became non-finite at epoch " + std::to_string(epoch));
    r.losses.push_back(loss);
    adam.step(param_refs(r.model, grad));
  }
  r.train_accuracy = pairwise_accuracy(r.model, train);
  r.heldout_accuracy = pairwise_accuracy(r.model, heldout);
  r.train_pairs = static_cast<int>(train.pairs.size());
  r.heldout_pairs = static_cast<int>(heldout.pairs.size());
  return r;
}

RewardTrainResult reward_train(const RewardDataset& ds, const TrainConfig& cfg) {
  std::vector<std::size_t> order(ds.examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0x72776420));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(order.size())));
  std::vector<RewardExample> train, hold;
  for (std::size_t k = 0; k < order.size(); ++k) (k < n_hold ? hold : train).push_back(ds.examples[order[k]]);
  return reward_train(reward_features(train, cfg.feature_dim), reward_features(hold, cfg.feature_dim), cfg);
}

}  // namespace octo::learn
