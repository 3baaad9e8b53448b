#pragma once

#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octo/episode.hpp"
#include "octo/learn/train.hpp"

namespace octo {

struct Split {
  bool seen_env = true;
  TaskCategory category = TaskCategory::routine;
};

/// Tasks the learned policy trains on: routine tasks in seen scenes.
bool in_training_split(const Task& task);
/// Reasoning tasks in seen scenes, kept out of training.
bool in_heldout_reasoning(const Task& task);
std::vector<TaskFile> filter_tasks(const std::vector<TaskFile>& tasks, bool (*keep)(const Task&));

/// What an actor sees before writing one script.
struct ActorInput {
  const WorldState& world;
  const Task& task;
  const std::string& policy_msg;
  const std::vector<std::string>& completed;
  int step = 0;
  std::uint64_t seed = 0;
};

/// Returns program text for the next step.
using Actor = std::function<std::string(const ActorInput&)>;

Actor oracle_actor();
/// Grammar-masked decode of `policy`; temperature 0 is greedy.
Actor policy_actor(const learn::Policy& policy, const learn::TokenVocab& vocab, double temperature = 0.0,
                   int max_calls = learn::kMaxCalls);
/// Samples uniformly among the tokens the grammar allows.
Actor random_actor(const learn::TokenVocab& vocab, int max_calls = learn::kMaxCalls);

struct TaskOutcome {
  std::string task;
  std::uint64_t seed = 0;
  Split split;
  bool success = false;
  int steps_used = 0;
  int scripts_emitted = 0;
  int scripts_parsed = 0;    // parsed with correct arity
  int scripts_executed = 0;  // parsed and ran without error
};

struct EvalReport {
  std::string model;
  std::vector<TaskOutcome> outcomes;  // sorted by (task, seed)

  struct Rate {
    int successes = 0;
    int total = 0;
    std::optional<double> value() const {
      return total ? std::optional(static_cast<double>(successes) / total) : std::nullopt;
    }
  };
  Rate seen_env() const;
  Rate unseen_env() const;
  Rate routine() const;
  Rate reasoning() const;
  Rate all() const;
  Rate where(const std::function<bool(const TaskOutcome&)>& keep) const;
  /// Scripts that parsed and ran without error over scripts emitted.
  std::optional<double> executability() const;
  /// Scripts that parsed (with correct arity) over scripts emitted.
  std::optional<double> parse_rate() const;
  std::map<int, int> steps_histogram() const;
};

/// Policy episode loop per (task, seed): act, resolve, run, reset on failure, stop on goal or budget.
TaskOutcome run_policy_episode(const TaskFile& task, const Actor& actor, std::uint64_t seed, int budget = kStepBudget);

EvalReport evaluate_actor(const Actor& actor, const std::vector<TaskFile>& tasks, const std::vector<std::uint64_t>& seeds,
                          const std::string& model = "policy", int workers = 1);
EvalReport evaluate_policy(const learn::Policy& policy, const learn::TokenVocab& vocab, const std::vector<TaskFile>& tasks,
                           const std::vector<std::uint64_t>& seeds, const std::string& model = "policy", int workers = 1);

std::string render_report(const EvalReport& report);
nlohmann::ordered_json report_json(const EvalReport& report);

}  // namespace octo
