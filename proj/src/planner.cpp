#include "octo/planner.hpp"

#include <deque>
#include <unordered_set>

#include "octo/script.hpp"

namespace octo {

namespace {

std::string state_key(const WorldState& w) {
  WorldState k = w;
  k.agent.name_registry.clear();
  k.step_counter = 0;
  return snapshot(k).bytes;
}

bool goal_mentions(const Goal& goal, const std::string& id, UnaryState s, bool value) {
  for (const auto& c : goal.conditions)
    if (c.format == TargetCondition::Format::unary && c.subject == id && c.state_or_relation == name(s) &&
        c.value == value)
      return true;
  return false;
}

// Prunes state changes the goal does not ask for. Opening stays available since it can reveal objects.
bool worth_trying(const ActionCall& call, const Goal& goal) {
  if (call.kind == ActionKind::donothing) return false;
  const auto effect = state_effect(call.kind);
  if (!effect || call.kind == ActionKind::open) return true;
  const auto& id = call.args.back().text;
  if (goal_mentions(goal, id, effect->first, effect->second)) return true;
  if (call.kind == ActionKind::fold) return goal_mentions(goal, id, UnaryState::unfoldable, false);
  if (call.kind == ActionKind::unfold) return goal_mentions(goal, id, UnaryState::foldable, false);
  return false;
}

std::vector<std::string> object_args(const ActionCall& call) { return call_object_ids(call, {}); }

TargetStates effect_of(ActionKind kind, const std::vector<std::string>& ids, const WorldState& after) {
  TargetStates t;
  t.inventory = after.agent.inventory;
  using F = TargetCondition::Format;
  switch (kind) {
    case ActionKind::MoveBot:
      t.conditions.push_back({F::binary, std::string(kAgentName), "nextto", ids[0], true});
      break;
    case ActionKind::put_ontop:
      t.conditions.push_back({F::binary, ids[0], "ontop", ids[1], true});
      break;
    case ActionKind::put_inside:
      t.conditions.push_back({F::binary, ids[0], "inside", ids[1], true});
      break;
    case ActionKind::EasyGrasp:
    case ActionKind::donothing:
    case ActionKind::registry:
      break;
    default: {
      const auto [s, v] = *state_effect(kind);
      t.conditions.push_back({F::unary, ids[0], std::string(name(s)), std::nullopt, v});
    }
  }
  return t;
}

}  // namespace

std::vector<PlanStep> oracle_plan(const WorldState& start, const Goal& goal, int max_depth) {
  if (goal_satisfied(start, goal)) return {};

  struct Node {
    WorldState world;
    int parent;
    ActionCall call;
    int depth;
  };
  std::vector<Node> nodes;
  nodes.push_back({start, -1, {}, 0});
  nodes.back().world.agent.name_registry.clear();
  std::unordered_set<std::string> seen{state_key(start)};
  std::deque<int> frontier{0};

  auto unwind = [&](int idx) {
    std::vector<PlanStep> plan;
    for (; nodes[idx].parent >= 0; idx = nodes[idx].parent) {
      const auto& n = nodes[idx];
      const auto ids = object_args(n.call);
      plan.push_back({n.call.kind, ids, describe_call(n.call.kind, ids), effect_of(n.call.kind, ids, n.world)});
    }
    return std::vector<PlanStep>(plan.rbegin(), plan.rend());
  };

  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop_front();
    if (nodes[cur].depth >= max_depth) continue;
    for (const auto& call : applicable_actions(nodes[cur].world)) {
      if (!worth_trying(call, goal)) continue;
      WorldState next = nodes[cur].world;
      if (!execute(next, call).success) continue;
      auto key = state_key(next);
      if (!seen.insert(std::move(key)).second) continue;
      const bool done = goal_satisfied(next, goal);
      nodes.push_back({std::move(next), cur, call, nodes[cur].depth + 1});
      const int idx = static_cast<int>(nodes.size()) - 1;
      if (done) return unwind(idx);
      frontier.push_back(idx);
    }
  }
  throw NoPlanFound("no plan within " + std::to_string(max_depth) + " actions");
}

std::string step_code(const PlanStep& step) {
  std::string code = "def act(robot, env, camera):\n    # Subtask: " + step.description;
  for (const auto& id : step.object_ids) {
    const std::string line = "\n    " + id + " = registry(env, \"" + id + "\")";
    if (code.find(line) == std::string::npos) code += line;
  }
  ActionCall call = ActionCall::grounded(step.kind, step.object_ids);
  for (auto& a : call.args)
    if (a.kind == Arg::Kind::literal) a.kind = Arg::Kind::identifier;
  code += "\n    " + render_call(call) + "\n    donothing(env)";
  return code;
}

TeacherResponse oracle_response(const WorldState& world, const Task& task, const std::vector<std::string>& completed) {
  TeacherResponse r;
  r.subtasks = completed;
  std::vector<PlanStep> plan;
  try {
    plan = oracle_plan(world, task.goal);
  } catch (const NoPlanFound&) {
    r.explain = "The goal " + task.name + " cannot be reached from here with the available actions, so I wait.";
    if (r.subtasks.empty()) r.subtasks.push_back("Wait");
    r.code = "def act(robot, env, camera):\n    donothing(env)";
    r.target_states.inventory = world.agent.inventory;
    return r;
  }
  if (plan.empty()) {
    r.explain = "The goal " + task.name + " is already reached.";
    if (r.subtasks.empty()) r.subtasks.push_back("Wait");
    r.code = "def act(robot, env, camera):\n    donothing(env)";
    r.target_states.inventory = world.agent.inventory;
    return r;
  }
  for (const auto& s : plan) r.subtasks.push_back(s.description);
  const auto& next = plan.front();
  r.explain = "The task goal is " + task.name + ". " + std::to_string(plan.size()) +
              " action(s) remain, so the next subtask is: " + next.description + ".";
  r.code = step_code(next);
  r.target_states = next.target;
  return r;
}

}  // namespace octo
