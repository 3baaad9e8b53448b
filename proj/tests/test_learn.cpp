#include <doctest.h>

#include <cmath>

#include "learn_fixture.hpp"
#include "octo/learn/checkpoint.hpp"

using namespace octo;
using namespace octo::learn;
using octo::testing::LearnFixture;

namespace {

// Byte loop written out here rather than calling the library hash.
std::uint64_t fnv_reference(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Policy perturbed_policy(int vocab, std::uint64_t seed, int dim = 256, int hidden = 16) {
  Policy p(PolicyShape{dim, hidden, vocab, 17}, seed);
  Rng rng(seed + 100);
  for (Eigen::Index i = 0; i < p.params.Wo.size(); ++i) p.params.Wo.data()[i] = 0.5 * standard_normal(rng);
  for (Eigen::Index i = 0; i < p.params.bo.size(); ++i) p.params.bo.data()[i] = 0.5 * standard_normal(rng);
  for (Eigen::Index i = 0; i < p.params.b1.size(); ++i) p.params.b1.data()[i] = 0.1 * standard_normal(rng);
  return p;
}

std::vector<SftExample> small_examples(const LearnFixture& f, int dim, std::size_t n) {
  std::vector<SftPair> pairs(f.train_pairs.begin(), f.train_pairs.begin() + static_cast<long>(n));
  return make_sft_examples(pairs, f.vocab, dim);
}

const std::string kMoveFridge =
    "def act(robot, env, camera):\n    fridge_xyejdx_0 = registry(env, \"fridge_xyejdx_0\")\n"
    "    MoveBot(env, robot, fridge_xyejdx_0, camera)\n    donothing(env)";

}  // namespace

TEST_CASE("hashed features") {
  CHECK(featurize_text("").nonZeros() == 0);
  CHECK(featurize_text("  ,;  ").nonZeros() == 0);
  CHECK(fnv_reference("fridge") == 12232244603861171380ull);
  CHECK(fnv1a64("fridge") == fnv_reference("fridge"));
  const auto x = featurize_text("fridge", 8);
  CHECK(x.nonZeros() == 1);
  CHECK(x.coeff(4) == 1.0);
  const auto y = featurize_text("Fridge fridge, FRIDGE", 8);
  CHECK(y.coeff(4) == 3.0);
  CHECK(text_tokens("Open(fridge_1), now!") == std::vector<std::string>{"open", "fridge_1", "now"});
  const auto a = featurize("Observed Objects: (bacon_150", "cook_bacon");
  const auto b = featurize("Observed Objects: (bacon_150", "cook_bacon");
  CHECK((a - b).norm() == 0.0);
  CHECK(l2_normalized(a).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l2_normalized(FeatureVector(16)).nonZeros() == 0);
}

TEST_CASE("token encoding") {
  const auto& f = LearnFixture::get();
  const auto& v = f.vocab;
  const auto toks = script_to_tokens(parse_script(kMoveFridge), v);
  CHECK(toks == std::vector<int>{kBos, TokenVocab::kind_token(ActionKind::MoveBot), v.id("fridge_xyejdx_0"), kSep,
                                 TokenVocab::kind_token(ActionKind::donothing), kEos});
  CHECK(render_script(tokens_to_script(toks, v)) == kMoveFridge);
  for (const auto& p : f.collected.sft) {
    const auto s = parse_script(p.code);
    CHECK(render_script(tokens_to_script(script_to_tokens(s, v), v)) == canonical_code(s, v));
  }
  auto cut = toks;
  cut.pop_back();
  CHECK_THROWS_AS(tokens_to_script(cut, v), Truncated);
  CHECK_THROWS_AS(tokens_to_script({kBos, v.id("fridge_xyejdx_0"), kEos}, v), UnknownToken);
  CHECK_THROWS_AS(v.id("no_such_object_9"), UnknownToken);
  CHECK_THROWS_AS(script_to_tokens(parse_script("def act(robot, env, camera):\n    open(robot, \"no_such_object_9\")"), v),
                  UnknownToken);
  for (int i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);
}

TEST_CASE("softmax and KL") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd p(1 + uniform_index(rng, 30)), q;
    for (Eigen::Index k = 0; k < p.size(); ++k) p(k) = 10 * standard_normal(rng);
    q = p;
    for (Eigen::Index k = 0; k < q.size(); ++k) q(k) += 5 * standard_normal(rng);
    CHECK(std::abs(softmax(p).sum() - 1.0) <= 1e-9);
    CHECK(kl_divergence(p, q) >= 0.0);
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  }
  Eigen::VectorXd u(2), o(2);
  u << 0.0, 0.0;
  o << std::log(0.9), std::log(0.1);
  const double closed = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(kl_divergence(u, o) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(softplus(800.0) == doctest::Approx(800.0));
}

TEST_CASE("sequence log-probability is the sum of token log-probabilities") {
  const auto& f = LearnFixture::get();
  const auto p = perturbed_policy(f.vocab.size(), 9, kFeatureDim, 64);
  for (const auto& ex : f.train) {
    double sum = 0;
    for (double lp : p.token_logprobs(ex.x, ex.tokens)) sum += lp;
    CHECK(std::abs(p.sequence_logprob(ex.x, ex.tokens) - sum) <= 1e-9);
    const auto t = p.forward(ex.x, ex.tokens);
    for (const auto& l : t.logits) CHECK(std::abs(softmax(l).sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("initial SFT loss is L ln|V|") {
  const auto& f = LearnFixture::get();
  Policy p(PolicyShape{kFeatureDim, 64, f.vocab.size(), 17}, 3);
  double expected = 0;
  for (const auto& ex : f.train) expected += static_cast<double>(ex.tokens.size() - 1) * std::log(f.vocab.size());
  expected /= static_cast<double>(f.train.size());
  CHECK(std::abs(sft_loss(p, f.train) - expected) <= 1e-6 * expected);
}

TEST_CASE("SFT memorises one example and fits the oracle data") {
  const auto& f = LearnFixture::get();
  const std::vector<SftExample> one{f.train[3]};
  const auto r = sft_train(one, f.vocab.size(), TrainConfig::sft_defaults());
  CHECK(decode_tokens(r.policy, f.vocab, one[0].x, one[0].objects, 0.0, nullptr) == one[0].tokens);

  const auto& losses = f.sft.losses;
  REQUIRE(losses.size() == 600);
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-6);
  CHECK(sft_accuracy(f.sft.policy, f.vocab, f.train) >= 0.95);

  const auto& step1 = f.collected.sft;
  for (std::size_t i = 0; i < step1.size(); ++i)
    if (step1[i].task_name == "cook_bacon" && step1[i].step == 1) {
      const auto ex = make_sft_examples({step1[i]}, f.vocab)[0];
      const auto out = decode_tokens(f.sft.policy, f.vocab, ex.x, ex.objects, 0.0, nullptr);
      CHECK(render_script(tokens_to_script(out, f.vocab)) == kMoveFridge);
    }
}

TEST_CASE("gradient checks") {
  const auto& f = LearnFixture::get();
  const int dim = 256;
  const auto data = small_examples(f, dim, 6);

  SUBCASE("SFT") {
    Policy p = perturbed_policy(f.vocab.size(), 21, dim);
    auto g = p.params.zeros_like();
    sft_loss(p, data, &g);
    const auto res = grad_check(param_refs(p.params, g), [&] { return sft_loss(p, data); }, 120, 5);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel_error <= 1e-4);
  }
  SUBCASE("reward") {
    Rng rng(2);
    const auto rd = reward_features(octo::testing::synthetic_reward_examples(rng, 40), dim);
    auto singles = rd;
    for (std::size_t i = 0; i < 10; ++i) singles.singles.emplace_back(rd.pairs[i].first, static_cast<int>(i % 2));
    Reward m(dim);
    for (Eigen::Index i = 0; i < m.w.size(); ++i) m.w(i) = 0.3 * standard_normal(rng);
    m.b = 0.2;
    Reward g(dim);
    reward_loss(m, singles, 0.5, 1e-3, &g);
    const auto res = grad_check(param_refs(m, g), [&] { return reward_loss(m, singles, 0.5, 1e-3); }, 120, 6);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel_error <= 1e-4);
  }
  SUBCASE("PPO") {
    Policy ref = perturbed_policy(f.vocab.size(), 31, dim);
    Policy p = ref;
    Rng rng(8);
    for (auto& [n, m] : p.params.blocks())
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += 0.01 * standard_normal(rng);
    std::vector<PpoContext> ctx;
    for (const auto& ex : data) ctx.push_back({ex.x, "do it", ex.objects});
    std::vector<PpoSample> samples;
    for (std::size_t c = 0; c < ctx.size(); ++c)
      for (int k = 0; k < 3; ++k) {
        auto s = sample_episode(ref, ref, f.vocab, ctx, c, rng, kMaxCalls);
        s.advantage = standard_normal(rng);
        samples.push_back(std::move(s));
      }
    auto g = p.params.zeros_like();
    ppo_loss(p, samples, ctx, 0.1, 0.2, &g);
    const auto res = grad_check(param_refs(p.params, g), [&] { return ppo_loss(p, samples, ctx, 0.1, 0.2); }, 120, 7);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

TEST_CASE("reward model") {
  Rng rng(13);
  const auto train_ex = octo::testing::synthetic_reward_examples(rng, 300);
  const auto held_ex = octo::testing::synthetic_reward_examples(rng, 150);
  const auto cfg = TrainConfig::reward_defaults();
  const auto r = reward_train(reward_features(train_ex), reward_features(held_ex), cfg);
  CHECK(r.train_accuracy == 1.0);
  CHECK(r.heldout_accuracy >= 0.9);
  CHECK(r.heldout_pairs == 150);

  auto swapped = train_ex;
  for (auto& e : swapped) {
    std::swap(e.response_i, e.response_j);
    e.preferred = 1 - e.preferred;
  }
  const auto s = reward_train(reward_features(swapped), reward_features(held_ex), cfg);
  CHECK((s.model.w - r.model.w).norm() == 0.0);
  for (const auto& e : held_ex)
    CHECK((r.model.score(e.instruction, e.response_i) > r.model.score(e.instruction, e.response_j)) ==
          (s.model.score(e.instruction, e.response_i) > s.model.score(e.instruction, e.response_j)));

  CHECK(std::isnan(pairwise_accuracy(r.model, RewardData{})));
  const auto& f = LearnFixture::get();
  CHECK(f.reward.train_pairs + f.reward.heldout_pairs > 0);
}

TEST_CASE("PPO limits") {
  const auto& f = LearnFixture::get();
  const auto rf = reward_model_fn(f.reward.model, f.contexts, f.vocab);

  SUBCASE("KL shrinks as beta grows") {
    std::vector<double> kls;
    for (double beta : {0.0, 0.1, 10.0, 1e6}) {
      auto c = TrainConfig::ppo_defaults();
      c.beta = beta;
      c.seed = 3;
      const auto r = ppo_train(f.sft.policy, f.vocab, f.contexts, rf, c);
      kls.push_back(r.kl_trace.back());
      CHECK(r.skipped_batches == 0);
    }
    for (std::size_t i = 1; i < kls.size(); ++i) CHECK(kls[i] <= kls[i - 1]);
    CHECK(kls.back() < 1e-3);
  }
  SUBCASE("mean reward rises") {
    const auto r = ppo_train(f.sft.policy, f.vocab, f.contexts, rf, TrainConfig::ppo_defaults());
    CHECK(r.reward_trace.back() > r.reward_trace.front());
    CHECK(r.reward_trace.size() == 20);
    CHECK(r.kl_trace.size() == 20);
  }
  SUBCASE("indicator reward without a penalty") {
    const int target = TokenVocab::kind_token(ActionKind::toggle_on);
    const RewardFn ind = [&](std::size_t, const std::vector<int>& toks) {
      return std::find(toks.begin(), toks.end(), target) != toks.end() ? 1.0 : 0.0;
    };
    const Policy init(PolicyShape{kFeatureDim, 64, f.vocab.size(), 17}, 1);
    auto c = TrainConfig::ppo_defaults();
    c.beta = 0.0;
    c.lr = 0.05;
    const std::vector<PpoContext> few(f.contexts.begin(), f.contexts.begin() + 8);
    const auto r = ppo_train(init, f.vocab, few, ind, c);
    for (const auto& ctx : few) {
      const auto toks = decode_tokens(r.policy, f.vocab, ctx.x, ctx.objects, 0.0, nullptr);
      CHECK(std::find(toks.begin(), toks.end(), target) != toks.end());
    }
  }
}

TEST_CASE("masked decoding always yields a valid script") {
  const auto& f = LearnFixture::get();
  const auto p = perturbed_policy(f.vocab.size(), 77, kFeatureDim, 64);
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    const auto& ex = f.train[uniform_index(rng, f.train.size())];
    const double temp = i % 2 ? 1.0 : 3.0;
    const auto toks = decode_tokens(i % 3 ? p : f.sft.policy, f.vocab, ex.x, ex.objects, temp, &rng);
    const auto text = render_script(tokens_to_script(toks, f.vocab));
    const auto s = parse_script(text);
    for (const auto& st : s.statements) REQUIRE(st.call.args.size() == signature(st.call.kind).size());
  }
  const auto& ex = f.train[0];
  CHECK(decode_tokens(p, f.vocab, ex.x, ex.objects, 0.0, nullptr) == decode_tokens(p, f.vocab, ex.x, ex.objects, 0.0, nullptr));
}

TEST_CASE("checkpoints restore decoding bit for bit") {
  const auto& f = LearnFixture::get();
  const auto dir = octo::testing::scratch_dir("ckpt");
  for (auto enc : {ParamEncoding::base64, ParamEncoding::binary}) {
    Checkpoint ck;
    ck.kind = "policy";
    ck.config = TrainConfig::sft_defaults();
    ck.config.seed = 42;
    ck.vocab = f.vocab;
    ck.policy = f.sft.policy;
    ck.meta["note"] = "test";
    const auto path = dir / (enc == ParamEncoding::base64 ? "p64.ckpt" : "pbin.ckpt");
    save_checkpoint(ck, path, enc);
    const auto back = load_checkpoint(path);
    CHECK(back.kind == "policy");
    CHECK(back.config.seed == 42);
    CHECK(back.vocab.tokens() == f.vocab.tokens());
    REQUIRE(back.policy.has_value());
    const auto a = f.sft.policy.params.blocks();
    const auto b = back.policy->params.blocks();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
    for (const auto& ex : f.train)
      CHECK(decode_tokens(*back.policy, back.vocab, ex.x, ex.objects, 0.0, nullptr) ==
            decode_tokens(f.sft.policy, f.vocab, ex.x, ex.objects, 0.0, nullptr));
  }
  Checkpoint rk;
  rk.kind = "reward";
  rk.config = TrainConfig::reward_defaults();
  rk.vocab = f.vocab;
  rk.reward = f.reward.model;
  save_checkpoint(rk, dir / "r.ckpt");
  const auto rb = load_checkpoint(dir / "r.ckpt");
  REQUIRE(rb.reward.has_value());
  CHECK(rb.reward->w == f.reward.model.w);
  CHECK(rb.reward->b == f.reward.model.b);

  std::ofstream(dir / "bad.ckpt") << "NOT A MODEL\n";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), CheckpointError);
  CHECK(base64_decode(base64_encode(std::string("\0\1\2xyz", 6))) == std::string("\0\1\2xyz", 6));
}

TEST_CASE("training config") {
  const auto c = TrainConfig::from_json(nlohmann::json{{"lr", 0.25}, {"beta", 2.0}}, TrainConfig::ppo_defaults());
  CHECK(c.lr == 0.25);
  CHECK(c.beta == 2.0);
  CHECK(c.ppo_iterations == 20);
  CHECK_THROWS_AS(TrainConfig::from_json(nlohmann::json{{"learning_rate", 1}}, TrainConfig{}), SchemaError);
  const auto d = TrainConfig::from_json(nlohmann::json::parse(c.to_json().dump()), TrainConfig{});
  CHECK(d.to_json() == c.to_json());
}
