#pragma once

#include <set>

#include "octo/bench.hpp"
#include "octo/explore.hpp"
#include "octo/learn/train.hpp"
#include "support.hpp"

namespace octo::testing {

// Oracle-collected data over the shipped suite plus the models trained on it, built once per process.
struct LearnFixture {
  std::vector<TaskFile> tasks;
  learn::TokenVocab vocab;
  CollectResult collected;
  std::vector<SftPair> train_pairs;  // routine tasks in seen scenes
  std::vector<learn::SftExample> train;
  learn::SftResult sft;
  RewardDataset reward_ds;
  learn::RewardTrainResult reward;
  std::vector<learn::PpoContext> contexts;

  static const LearnFixture& get() {
    static const LearnFixture f;
    return f;
  }

 private:
  LearnFixture() {
    tasks = load_task_dir(tasks_dir());
    vocab = learn::vocab_for_tasks(tasks);
    ExploreConfig ec;
    ec.sibling_attempts = 1;
    collected = collect_dataset(tasks, TeacherConfig{}, {7}, ec);
    std::set<std::string> keep;
    for (const auto& t : tasks)
      if (in_training_split(t.task)) keep.insert(t.task.name);
    for (const auto& p : collected.sft)
      if (keep.contains(p.task_name)) train_pairs.push_back(p);
    train = learn::make_sft_examples(train_pairs, vocab);
    sft = learn::sft_train(train, vocab.size(), learn::TrainConfig::sft_defaults());
    reward_ds = build_reward_dataset(collected.trees);
    reward = learn::reward_train(reward_ds, learn::TrainConfig::reward_defaults());
    contexts = learn::make_ppo_contexts(train_pairs, vocab);
  }
};

// Responses are bags of words; the preferred one has the larger hidden score (words w0..w19 count +1, w20..w39 -1).
inline std::vector<RewardExample> synthetic_reward_examples(Rng& rng, int n) {
  auto sentence = [&](int* score) {
    std::string s;
    *score = 0;
    for (int k = 0; k < 6; ++k) {
      const auto w = static_cast<int>(uniform_index(rng, 40));
      *score += w < 20 ? 1 : -1;
      s += "w" + std::to_string(w) + " ";
    }
    return s;
  };
  std::vector<RewardExample> out;
  while (static_cast<int>(out.size()) < n) {
    int sa = 0, sb = 0;
    auto a = sentence(&sa);
    auto b = sentence(&sb);
    if (sa == sb) continue;
    RewardExample ex;
    ex.env_msg = "ctx " + std::to_string(out.size());
    ex.instruction = "tidy the desk";
    ex.response_i = a;
    ex.response_j = b;
    ex.preferred = sa > sb ? 0 : 1;
    ex.pair_kind = PairKind::sibling;
    out.push_back(ex);
  }
  return out;
}

}  // namespace octo::testing
