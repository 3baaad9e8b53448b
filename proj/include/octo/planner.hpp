#pragma once

#include <string>
#include <vector>

#include "octo/actions.hpp"
#include "octo/protocol.hpp"
#include "octo/world.hpp"

namespace octo {

class NoPlanFound : public Error {
 public:
  using Error::Error;
};

struct PlanStep {
  ActionKind kind = ActionKind::donothing;
  std::vector<std::string> object_ids;
  std::string description;  // e.g. "Move to fridge_1"
  TargetStates target;      // what holds right after this step
};

inline constexpr int kMaxPlanDepth = 12;

/// Shortest action sequence reaching `goal`, found by breadth-first search over applicable actions.
std::vector<PlanStep> oracle_plan(const WorldState& world, const Goal& goal, int max_depth = kMaxPlanDepth);

/// One-action program: registry prelude, the action, then donothing.
std::string step_code(const PlanStep& step);

/// Full structured answer for the next step. `completed` lists subtasks already achieved in this episode.
TeacherResponse oracle_response(const WorldState& world, const Task& task, const std::vector<std::string>& completed);

}  // namespace octo
