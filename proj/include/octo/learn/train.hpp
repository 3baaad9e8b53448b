#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "octo/explore.hpp"
#include "octo/feedback.hpp"
#include "octo/learn/policy.hpp"
#include "octo/learn/tokens.hpp"

namespace octo::learn {

using Policy = PolicyModel<double>;
using Reward = RewardModel<double>;

class DivergedLoss : public Error {
 public:
  using Error::Error;
};
class RatioOverflow : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double lr = 0.3;
  int batch_size = 0;  // 0 means full batch
  int epochs = 600;
  double beta = 0.1;
  double clip_eps = 0.2;
  int ppo_epochs = 4;
  std::uint64_t seed = 0;
  int hidden = 64;
  int feature_dim = kFeatureDim;
  int max_len = max_sequence_length() + 1;
  int max_calls = kMaxCalls;
  double singleton_weight = 0.5;
  double l2 = 1e-4;
  double holdout_fraction = 0.2;
  int ppo_iterations = 20;
  int samples_per_context = 4;
  double max_grad_norm = 1.0;

  static TrainConfig sft_defaults();
  static TrainConfig reward_defaults();
  static TrainConfig ppo_defaults();

  nlohmann::ordered_json to_json() const;
  /// Overlays the keys present in `j` onto `base`; unknown keys throw SchemaError.
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

/// A contiguous parameter block paired with its gradient.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  Eigen::Index size = 0;
};

std::vector<ParamRef> param_refs(PolicyParams<double>& p, const PolicyParams<double>& g);
std::vector<ParamRef> param_refs(Reward& r, const Reward& g);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(const std::vector<ParamRef>& params);

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

/// Scales all gradients in place so their joint L2 norm is at most `max_norm`; returns the norm before.
double clip_grad_norm(PolicyParams<double>& g, double max_norm);

struct GradCheckResult {
  int checked = 0;
  double max_rel_error = 0.0;
};

/// Central differences on `count` entries (half taken from entries with nonzero analytic gradient).
GradCheckResult grad_check(const std::vector<ParamRef>& params, const std::function<double()>& loss, int count,
                           std::uint64_t seed, double step = 1e-5);

// ---- supervised stage

struct SftExample {
  std::string task_name;
  FeatureVector x;
  std::vector<int> tokens;   // BOS ... EOS
  std::vector<int> objects;  // object tokens the decoder may emit
};

/// Object tokens listed in a rendered policy message (observed objects and inventory).
std::vector<int> context_objects(const std::string& env_msg, const TokenVocab& vocab);

std::vector<SftExample> make_sft_examples(const std::vector<SftPair>& pairs, const TokenVocab& vocab,
                                          int dim = kFeatureDim);

/// Mean over examples of the summed token negative log-likelihood (full softmax).
double sft_loss(const Policy& policy, const std::vector<SftExample>& data, PolicyParams<double>* grad = nullptr);

struct SftResult {
  Policy policy;
  std::vector<double> losses;  // one per epoch, measured before the update
};

SftResult sft_train(const std::vector<SftExample>& data, int vocab_size, const TrainConfig& cfg);
SftResult sft_train(const std::vector<SftExample>& data, Policy init, const TrainConfig& cfg);

// ---- decoding

/// Grammar-masked decode; temperature 0 is argmax with ties to the lowest token id.
std::vector<int> decode_tokens(const Policy& policy, const TokenVocab& vocab, const FeatureVector& x,
                               const std::vector<int>& objects, double temperature, Rng* rng,
                               int max_calls = kMaxCalls);

/// Fraction of examples whose argmax decode equals the target tokens exactly.
double sft_accuracy(const Policy& policy, const TokenVocab& vocab, const std::vector<SftExample>& data,
                    int max_calls = kMaxCalls);

// ---- reward stage

struct RewardData {
  std::vector<std::pair<FeatureVector, FeatureVector>> pairs;  // (preferred, other)
  std::vector<std::pair<FeatureVector, int>> singles;          // (response, label)
};

RewardData reward_features(const std::vector<RewardExample>& examples, int dim = kFeatureDim);

/// (sum softplus(r_lose - r_win) + w * sum BCE(singles)) / N + l2/2 * |w|^2.
double reward_loss(const Reward& model, const RewardData& data, double singleton_weight, double l2,
                   Reward* grad = nullptr);

/// Share of pairs where the preferred response scores strictly higher; NaN without pairs.
double pairwise_accuracy(const Reward& model, const RewardData& data);

struct RewardTrainResult {
  Reward model;
  std::vector<double> losses;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  int train_pairs = 0;
  int heldout_pairs = 0;
};

RewardTrainResult reward_train(const RewardData& train, const RewardData& heldout, const TrainConfig& cfg);
/// Splits `ds` by a seeded shuffle using cfg.holdout_fraction.
RewardTrainResult reward_train(const RewardDataset& ds, const TrainConfig& cfg);

// ---- policy optimisation

struct PpoContext {
  FeatureVector x;
  std::string instruction;
  std::vector<int> objects;
};

using RewardFn = std::function<double(std::size_t context, const std::vector<int>& tokens)>;

std::vector<PpoContext> make_ppo_contexts(const std::vector<SftPair>& pairs, const TokenVocab& vocab,
                                          int dim = kFeatureDim);

/// r_phi(instruction, rendered script); `model`, `contexts` and `vocab` must outlive the function.
RewardFn reward_model_fn(const Reward& model, const std::vector<PpoContext>& contexts, const TokenVocab& vocab);

struct PpoSample {
  std::size_t context = 0;
  std::vector<int> tokens;                  // BOS ... EOS
  std::vector<std::vector<int>> allowed;    // grammar mask per generated position
  std::vector<double> old_logp;             // masked log-prob of each generated token at sampling time
  std::vector<Eigen::VectorXd> init_logp;   // masked log-probs of the reference policy over `allowed`
  double reward = 0.0;
  double advantage = 0.0;
};

/// 1/(1+beta) * mean_s sum_t [ -min(rho A, clip(rho) A) + beta KL_t(pi || pi_init) ].
double ppo_loss(const Policy& policy, const std::vector<PpoSample>& samples, const std::vector<PpoContext>& contexts,
                double beta, double clip_eps, PolicyParams<double>* grad = nullptr);

/// Draws one sample and fills everything but reward/advantage.
PpoSample sample_episode(const Policy& policy, const Policy& reference, const TokenVocab& vocab,
                         const std::vector<PpoContext>& contexts, std::size_t context, Rng& rng, int max_calls);

/// Mean over contexts of the summed per-token KL(pi || ref) along pi's greedy decode.
double mean_kl(const Policy& policy, const Policy& reference, const TokenVocab& vocab,
               const std::vector<PpoContext>& contexts, int max_calls = kMaxCalls);

struct PpoResult {
  Policy policy;
  std::vector<double> reward_trace;  // mean sampled reward per iteration
  std::vector<double> kl_trace;      // mean_kl after each iteration
  int skipped_batches = 0;
};

PpoResult ppo_train(const Policy& init, const TokenVocab& vocab, const std::vector<PpoContext>& contexts,
                    const RewardFn& reward, const TrainConfig& cfg);

}  // namespace octo::learn
