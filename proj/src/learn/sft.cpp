#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "octo/learn/train.hpp"
#include "octo/protocol.hpp"

namespace octo::learn {

std::vector<int> context_objects(const std::string& env_msg, const TokenVocab& vocab) {
  const EnvironmentMessage msg = parse_env_message(env_msg);
  std::set<std::string> ids;
  for (const auto& o : msg.observed_objects) ids.insert(o.id);
  if (msg.inventory)
    for (const auto& id : *msg.inventory) ids.insert(id);
  return vocab.object_tokens({ids.begin(), ids.end()});
}

std::vector<SftExample> make_sft_examples(const std::vector<SftPair>& pairs, const TokenVocab& vocab, int dim) {
  std::vector<SftExample> out;
  for (const auto& p : pairs) {
    SftExample ex;
    ex.task_name = p.task_name;
    ex.x = featurize(p.env_msg, p.task_goal, dim);
    ex.tokens = script_to_tokens(parse_script(p.code), vocab);
    ex.objects = context_objects(p.env_msg, vocab);
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

double sft_loss_subset(const Policy& policy, const std::vector<SftExample>& data, const std::vector<std::size_t>& idx,
                       PolicyParams<double>* grad) {
  if (idx.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(idx.size());
  double loss = 0;
  for (std::size_t i : idx) {
    const auto& ex = data[i];
    const auto trace = policy.forward(ex.x, ex.tokens);
    std::vector<Eigen::VectorXd> dlogits;
    for (std::size_t l = 0; l < trace.logits.size(); ++l) {
      const Eigen::VectorXd lp = log_softmax(trace.logits[l]);
      const int target = ex.tokens[l + 1];
      loss -= lp(target);
      if (grad) {
        Eigen::VectorXd d = lp.array().exp();
        d(target) -= 1.0;
        dlogits.push_back(d * scale);
      }
    }
    if (grad) policy.backward(trace, dlogits, *grad);
  }
  return loss * scale;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double sft_loss(const Policy& policy, const std::vector<SftExample>& data, PolicyParams<double>* grad) {
  return sft_loss_subset(policy, data, iota_n(data.size()), grad);
}

SftResult sft_train(const std::vector<SftExample>& data, int vocab_size, const TrainConfig& cfg) {
  PolicyShape shape;
  shape.dim = cfg.feature_dim;
  shape.hidden = cfg.hidden;
  shape.vocab = vocab_size;
  shape.max_len = cfg.max_len;
  return sft_train(data, Policy(shape, cfg.seed), cfg);
}

SftResult sft_train(const std::vector<SftExample>& data, Policy init, const TrainConfig& cfg) {
  SftResult r{std::move(init), {}};
  auto order = iota_n(data.size());
  const std::size_t batch =
      cfg.batch_size <= 0 ? data.size() : std::min<std::size_t>(data.size(), static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 0; epoch < cfg.epochs && !data.empty(); ++epoch) {
    if (batch < data.size()) {
      Rng rng(mix_seed(cfg.seed, 0x736674ULL + static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    }
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      auto g = r.policy.params.zeros_like();
      const double loss = sft_loss_subset(r.policy, data, idx, &g);
      if (!std::isfinite(loss)) throw DivergedLoss("supervised loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(idx.size());
      auto p = r.policy.params.blocks();
      auto gb = g.blocks();
      for (std::size_t i = 0; i < p.size(); ++i) *p[i].second -= cfg.lr * *gb[i].second;
    }
    r.losses.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return r;
}

std::vector<int> decode_tokens(const Policy& policy, const TokenVocab& vocab, const FeatureVector& x,
                               const std::vector<int>& objects, double temperature, Rng* rng, int max_calls) {
  DecodeGrammar grammar(vocab, objects, max_calls);
  std::vector<int> tokens{kBos};
  const Eigen::VectorXd h = policy.context(Policy::normalise(x));
  while (!grammar.done()) {
    const auto allowed = grammar.allowed();
    if (allowed.empty()) throw Truncated("decode grammar has no legal continuation");
    const Eigen::VectorXd logits =
        gather(policy.step_logits(h, tokens.back(), static_cast<int>(tokens.size()) - 1), allowed);
    std::size_t pick = 0;
    if (temperature <= 0 || rng == nullptr) {
      for (std::size_t i = 1; i < allowed.size(); ++i)
        if (logits(static_cast<Eigen::Index>(i)) > logits(static_cast<Eigen::Index>(pick))) pick = i;
    } else {
      const Eigen::VectorXd p = softmax(Eigen::VectorXd(logits / temperature));
      const double u = uniform01(*rng);
      double acc = 0;
      pick = allowed.size() - 1;
      for (std::size_t i = 0; i < allowed.size(); ++i) {
        acc += p(static_cast<Eigen::Index>(i));
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    grammar.push(allowed[pick]);
    tokens.push_back(allowed[pick]);
  }
  return tokens;
}

double sft_accuracy(const Policy& policy, const TokenVocab& vocab, const std::vector<SftExample>& data, int max_calls) {
  if (data.empty()) return 0.0;
  int hits = 0;
  for (const auto& ex : data)
    if (decode_tokens(policy, vocab, ex.x, ex.objects, 0.0, nullptr, max_calls) == ex.tokens) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace octo::learn
