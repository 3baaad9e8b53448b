#pragma once

#include <optional>
#include <string>
#include <vector>

#include "octo/protocol.hpp"
#include "octo/script.hpp"
#include "octo/teacher.hpp"

namespace octo {

inline constexpr int kStepBudget = 10;

struct StepRecord {
  int index = 0;        // step number within the episode, 1-based
  int sample = 0;       // 0 for the executed attempt; >0 for extra sibling attempts
  std::string env_msg;  // what the teacher saw
  std::string policy_msg;  // observed-view message fed to the learned policy
  std::string instruction;  // subtask this attempt addresses
  std::string teacher_text;
  std::optional<TeacherResponse> response;
  std::string canonical_code;  // comment-free canonical script, empty when unparseable
  std::string failure;         // parse error, run error or judge reason; empty on success
  StepResult result;
  bool executed = false;
  bool step_success = false;
  std::string world_before;
  std::string world_after;
  std::string state_before;  // hash ignoring the step counter, shared by sibling attempts
};

struct Episode {
  std::string task_name;
  std::uint64_t seed = 0;
  std::string prompt_hash;
  TeacherKind teacher = TeacherKind::oracle;
  MessageView teacher_view = MessageView::scene_graph;
  std::vector<StepRecord> steps;
  std::vector<StepRecord> siblings;  // extra attempts from the same world_before, never executed for real
  bool outcome = false;
  bool invalid = false;
  std::string invalid_reason;
  int steps_used = 0;
  std::string final_world;
};

/// World hash with the step counter zeroed, so attempts from the same situation compare equal.
std::string state_hash(const WorldState& world);

}  // namespace octo
