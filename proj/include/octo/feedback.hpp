#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octo/episode.hpp"

namespace octo {

/// 1 iff every inventory expectation and every condition holds. Unknown names judge 0 and fill `reason`.
bool judge_step(const WorldState& world_after, const TargetStates& target, std::string* reason = nullptr);

/// 1 iff the goal holds in the final world and the budget was respected.
bool judge_task(const WorldState& final_world, const Goal& goal, int steps_used);

struct StepNode {
  int node_id = 0;
  std::optional<int> parent_id;
  std::string instruction;   // shared by all children of the parent
  std::string response;      // canonical code, or the raw teacher text when it did not parse
  std::string env_msg;
  bool step_success = false;
  bool effective = false;
  std::string world_before;
  std::string world_after;
};

struct TaskTree {
  std::string task_name;
  std::uint64_t seed = 0;
  std::map<int, StepNode> nodes;
  int root_id = 0;
  bool task_success = false;
  int steps_used = 0;
};

/// Root is synthetic (the task goal). Each attempt hangs under the last successful step.
TaskTree build_task_tree(const Episode& episode);

TaskTree label_tree(TaskTree tree);

enum class PairKind : std::uint8_t { sibling, singleton };

struct RewardExample {
  std::string env_msg;
  std::string instruction;
  std::string response_i;
  std::string response_j;
  int preferred = 0;  // 0 → i, 1 → j; for singletons the absolute label
  PairKind pair_kind = PairKind::sibling;
};

struct RewardDataset {
  std::vector<RewardExample> examples;
  std::string run_id;
  std::string prompt_hash;
};

RewardDataset build_reward_dataset(const std::vector<TaskTree>& trees);

void write_reward_dataset(const RewardDataset& ds, const std::string& jsonl_path);
RewardDataset read_reward_dataset(const std::string& jsonl_path);

}  // namespace octo
