#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "octo/episode.hpp"
#include "octo/feedback.hpp"
#include "octo/teacher.hpp"

namespace octo {

struct ExploreConfig {
  int budget = kStepBudget;
  MessageView teacher_view = MessageView::scene_graph;
  int sibling_attempts = 0;       // extra teacher samples per step, run on a scratch copy
  double sibling_temperature = 1.0;  // oracle temperature for those samples
  int workers = 1;
};

/// Teacher-driven loop: render, ask, parse, run, judge, reset on failure, stop on goal or budget.
/// `sibling_teacher` answers the extra attempts (defaults to `teacher`).
Episode run_episode(const TaskFile& task, Teacher& teacher, std::uint64_t seed, const ExploreConfig& cfg = {},
                    Teacher* sibling_teacher = nullptr, std::vector<std::string>* transcript = nullptr);

struct SftPair {
  std::string task_name;
  std::uint64_t seed = 0;
  int step = 0;
  std::string env_msg;  // policy view
  std::string task_goal;
  std::string instruction;
  std::string code;  // canonical, comment-free
};

struct CollectResult {
  std::vector<Episode> episodes;
  std::vector<SftPair> sft;
  std::vector<TaskTree> trees;
  std::vector<std::string> log;
};

/// Runs every (task, seed) pair; writes <task>_<seed>.traj.jsonl and .teacher.jsonl under `out_dir` when set.
CollectResult collect_dataset(const std::vector<TaskFile>& tasks, const TeacherConfig& teacher,
                              const std::vector<std::uint64_t>& seeds, const ExploreConfig& cfg = {},
                              const std::filesystem::path& out_dir = {});

std::vector<SftPair> sft_pairs(const Episode& episode, const Task& task);

std::filesystem::path trajectory_path(const std::filesystem::path& dir, const std::string& task, std::uint64_t seed);
std::string trajectory_jsonl(const Episode& episode, const TaskFile& task);

struct LoadedTrajectory {
  TaskFile task;
  Episode episode;
};
LoadedTrajectory read_trajectory(const std::filesystem::path& path);

struct ReplayReport {
  bool ok = false;
  int steps_verified = 0;
  std::string message;
};

/// Re-executes recorded teacher texts from the recorded scene and checks every hash and label.
ReplayReport verify_trajectory(const std::filesystem::path& path);

std::vector<SftPair> read_sft_pairs(const std::filesystem::path& jsonl);
void write_sft_pairs(const std::vector<SftPair>& pairs, const std::filesystem::path& jsonl);

}  // namespace octo
