#include <algorithm>
#include <cmath>
#include <numeric>

#include "octo/learn/train.hpp"

namespace octo::learn {

namespace {

std::size_t position_of(const std::vector<int>& allowed, int token) {
  const auto it = std::find(allowed.begin(), allowed.end(), token);
  if (it == allowed.end()) throw UnknownToken("sampled token outside its grammar mask");
  return static_cast<std::size_t>(it - allowed.begin());
}

}  // namespace

std::vector<PpoContext> make_ppo_contexts(const std::vector<SftPair>& pairs, const TokenVocab& vocab, int dim) {
  std::vector<PpoContext> out;
  for (const auto& p : pairs) out.push_back({featurize(p.env_msg, p.task_goal, dim), p.instruction, context_objects(p.env_msg, vocab)});
  return out;
}

RewardFn reward_model_fn(const Reward& model, const std::vector<PpoContext>& contexts, const TokenVocab& vocab) {
  return [&model, &contexts, &vocab](std::size_t c, const std::vector<int>& tokens) {
    return model.score(contexts.at(c).instruction, render_script(tokens_to_script(tokens, vocab)));
  };
}

PpoSample sample_episode(const Policy& policy, const Policy& reference, const TokenVocab& vocab,
                         const std::vector<PpoContext>& contexts, std::size_t context, Rng& rng, int max_calls) {
  const auto& ctx = contexts.at(context);
  PpoSample s;
  s.context = context;
  s.tokens = {kBos};
  DecodeGrammar grammar(vocab, ctx.objects, max_calls);
  const Eigen::VectorXd h = policy.context(Policy::normalise(ctx.x));
  const Eigen::VectorXd h_ref = reference.context(Policy::normalise(ctx.x));
  while (!grammar.done()) {
    auto allowed = grammar.allowed();
    if (allowed.empty()) throw Truncated("decode grammar has no legal continuation");
    const int pos = static_cast<int>(s.tokens.size()) - 1;
    const Eigen::VectorXd lp = log_softmax(gather(policy.step_logits(h, s.tokens.back(), pos), allowed));
    const Eigen::VectorXd lq = log_softmax(gather(reference.step_logits(h_ref, s.tokens.back(), pos), allowed));
    const double u = uniform01(rng);
    double acc = 0;
    std::size_t pick = allowed.size() - 1;
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      acc += std::exp(lp(static_cast<Eigen::Index>(i)));
      if (u < acc) {
        pick = i;
        break;
      }
    }
    grammar.push(allowed[pick]);
    s.tokens.push_back(allowed[pick]);
    s.old_logp.push_back(lp(static_cast<Eigen::Index>(pick)));
    s.init_logp.push_back(lq);
    s.allowed.push_back(std::move(allowed));
  }
  return s;
}

double ppo_loss(const Policy& policy, const std::vector<PpoSample>& samples, const std::vector<PpoContext>& contexts,
                double beta, double clip_eps, PolicyParams<double>* grad) {
  if (samples.empty()) return 0.0;
  const double scale = 1.0 / ((1.0 + beta) * static_cast<double>(samples.size()));
  double total = 0;
  for (const auto& s : samples) {
    const auto trace = policy.forward(contexts.at(s.context).x, s.tokens);
    std::vector<Eigen::VectorXd> dlogits;
    for (std::size_t t = 0; t < s.allowed.size(); ++t) {
      const auto& allowed = s.allowed[t];
      const Eigen::VectorXd lp = log_softmax(gather(trace.logits[t], allowed));
      const Eigen::VectorXd p = lp.array().exp();
      const auto a = static_cast<Eigen::Index>(position_of(allowed, s.tokens[t + 1]));
      const double rho = std::exp(lp(a) - s.old_logp[t]);
      if (!std::isfinite(rho) || rho > 1e12) throw RatioOverflow("importance ratio overflow");
      const double unclipped = rho * s.advantage;
      const double clipped = std::clamp(rho, 1 - clip_eps, 1 + clip_eps) * s.advantage;
      const Eigen::VectorXd diff = lp - s.init_logp[t];
      const double kl = p.dot(diff);
      total += -std::min(unclipped, clipped) + beta * kl;
      if (grad) {
        const double d_lpa = unclipped <= clipped ? -s.advantage * rho : 0.0;
        Eigen::VectorXd dm = -d_lpa * p;
        dm(a) += d_lpa;
        dm += beta * (p.array() * (diff.array() - kl)).matrix();
        Eigen::VectorXd full = Eigen::VectorXd::Zero(policy.vocab_size());
        for (std::size_t i = 0; i < allowed.size(); ++i) full(allowed[i]) = scale * dm(static_cast<Eigen::Index>(i));
        dlogits.push_back(std::move(full));
      }
    }
    if (grad) policy.backward(trace, dlogits, *grad);
  }
  return total * scale;
}

double mean_kl(const Policy& policy, const Policy& reference, const TokenVocab& vocab,
               const std::vector<PpoContext>& contexts, int max_calls) {
  if (contexts.empty()) return 0.0;
  double sum = 0;
  for (const auto& ctx : contexts) {
    const auto tokens = decode_tokens(policy, vocab, ctx.x, ctx.objects, 0.0, nullptr, max_calls);
    DecodeGrammar grammar(vocab, ctx.objects, max_calls);
    const Eigen::VectorXd h = policy.context(Policy::normalise(ctx.x));
    const Eigen::VectorXd h_ref = reference.context(Policy::normalise(ctx.x));
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
      const auto allowed = grammar.allowed();
      const int pos = static_cast<int>(t);
      sum += kl_divergence(gather(policy.step_logits(h, tokens[t], pos), allowed),
                           gather(reference.step_logits(h_ref, tokens[t], pos), allowed));
      grammar.push(tokens[t + 1]);
    }
  }
  return sum / static_cast<double>(contexts.size());
}

PpoResult ppo_train(const Policy& init, const TokenVocab& vocab, const std::vector<PpoContext>& contexts,
                    const RewardFn& reward, const TrainConfig& cfg) {
  PpoResult r{init, {}, {}, 0};
  Rng rng(mix_seed(cfg.seed, 0x70706f));
  bool have_baseline = false;
  double baseline = 0;
  for (int it = 0; it < cfg.ppo_iterations && !contexts.empty(); ++it) {
    std::vector<PpoSample> samples;
    for (std::size_t c = 0; c < contexts.size(); ++c)
      for (int k = 0; k < cfg.samples_per_context; ++k)
        samples.push_back(sample_episode(r.policy, init, vocab, contexts, c, rng, cfg.max_calls));
    double mean_r = 0;
    for (auto& s : samples) {
      s.reward = reward(s.context, s.tokens);
      mean_r += s.reward;
    }
    mean_r /= static_cast<double>(samples.size());
    r.reward_trace.push_back(mean_r);
    baseline = have_baseline ? 0.9 * baseline + 0.1 * mean_r : mean_r;
    have_baseline = true;
    for (auto& s : samples) s.advantage = s.reward - baseline;

    const std::size_t batch = cfg.batch_size <= 0 ? samples.size()
                                                  : std::min<std::size_t>(samples.size(), static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < cfg.ppo_epochs; ++e) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      for (std::size_t start = 0; start < order.size(); start += batch) {
        std::vector<PpoSample> mb;
        for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) mb.push_back(samples[order[k]]);
        auto g = r.policy.params.zeros_like();
        try {
          const double loss = ppo_loss(r.policy, mb, contexts, cfg.beta, cfg.clip_eps, &g);
          if (!std::isfinite(loss)) throw RatioOverflow("non-finite surrogate");
        } catch (const RatioOverflow&) {
          ++r.skipped_batches;
          continue;
        }
        clip_grad_norm(g, cfg.max_grad_norm);
        auto p = r.policy.params.blocks();
        auto gb = g.blocks();
        for (std::size_t i = 0; i < p.size(); ++i) *p[i].second -= cfg.lr * *gb[i].second;
      }
    }
    r.kl_trace.push_back(mean_kl(r.policy, init, vocab, contexts, cfg.max_calls));
  }
  return r;
}

}  // namespace octo::learn
