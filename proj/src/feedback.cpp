#include "octo/feedback.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <tuple>

namespace octo {

using ojson = nlohmann::ordered_json;

bool judge_step(const WorldState& w, const TargetStates& target, std::string* reason) {
  auto fail = [&](std::string why) {
    if (reason) *reason = std::move(why);
    return false;
  };
  for (const auto& want : target.inventory) {
    const bool held = std::any_of(w.agent.inventory.begin(), w.agent.inventory.end(), [&](const std::string& id) {
      const auto* o = w.find(id);
      return id == want || (o && o->category == want);
    });
    if (!held) return fail("expected " + want + " in the inventory");
  }
  for (const auto& c : target.conditions) {
    try {
      if (!check_condition(w, c)) return fail("target state (" + render_condition(c) + ") does not hold");
    } catch (const Error& e) {
      return fail("target state (" + render_condition(c) + ") cannot be checked: " + e.what());
    }
  }
  if (reason) reason->clear();
  return true;
}

bool judge_task(const WorldState& final_world, const Goal& goal, int steps_used) {
  if (steps_used > kStepBudget) return false;
  try {
    return goal_satisfied(final_world, goal);
  } catch (const Error&) {
    return false;
  }
}

namespace {

StepNode node_from(const StepRecord& r, int id, int parent) {
  StepNode n;
  n.node_id = id;
  n.parent_id = parent;
  n.instruction = r.instruction;
  n.response = r.canonical_code.empty() ? r.teacher_text : r.canonical_code;
  n.env_msg = r.env_msg;
  n.step_success = r.step_success;
  n.world_before = r.state_before;
  n.world_after = r.world_after;
  return n;
}

}  // namespace

TaskTree build_task_tree(const Episode& ep) {
  TaskTree t;
  t.task_name = ep.task_name;
  t.seed = ep.seed;
  t.task_success = ep.outcome;
  t.steps_used = ep.steps_used;
  StepNode root;
  root.node_id = 0;
  root.instruction = ep.task_name;
  root.step_success = true;
  t.nodes[0] = root;

  std::map<int, std::string> group_instruction;
  int parent = 0;
  int next_id = 1;
  auto add = [&](const StepRecord& r) {
    StepNode n = node_from(r, next_id++, parent);
    auto [it, fresh] = group_instruction.emplace(parent, n.instruction);
    if (!fresh) n.instruction = it->second;
    t.nodes[n.node_id] = n;
    return n.node_id;
  };
  for (const auto& step : ep.steps) {
    const int id = add(step);
    for (const auto& sib : ep.siblings)
      if (sib.index == step.index) add(sib);
    if (step.step_success) parent = id;
  }
  return label_tree(std::move(t));
}

TaskTree label_tree(TaskTree tree) {
  for (auto& [id, n] : tree.nodes) n.effective = tree.task_success && n.step_success;
  return tree;
}

RewardDataset build_reward_dataset(const std::vector<TaskTree>& trees_in) {
  std::vector<const TaskTree*> trees;
  for (const auto& t : trees_in) trees.push_back(&t);
  std::stable_sort(trees.begin(), trees.end(), [](const TaskTree* a, const TaskTree* b) {
    return std::tie(a->task_name, a->seed) < std::tie(b->task_name, b->seed);
  });

  RewardDataset ds;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  auto emit = [&](RewardExample ex) {
    if (seen.emplace(ex.env_msg, ex.response_i, ex.response_j).second) ds.examples.push_back(std::move(ex));
  };

  for (const auto* tree : trees) {
    std::map<int, std::vector<const StepNode*>> groups;
    for (const auto& [id, n] : tree->nodes)
      if (n.parent_id) groups[*n.parent_id].push_back(&n);
    for (const auto& [parent, kids] : groups) {
      const bool any_pos = std::any_of(kids.begin(), kids.end(), [](const StepNode* n) { return n->effective; });
      const bool any_neg = std::any_of(kids.begin(), kids.end(), [](const StepNode* n) { return !n->effective; });
      if (any_pos && any_neg) {
        for (std::size_t a = 0; a < kids.size(); ++a)
          for (std::size_t b = a + 1; b < kids.size(); ++b) {
            if (kids[a]->effective == kids[b]->effective) continue;
            emit({kids.front()->env_msg, kids.front()->instruction, kids[a]->response, kids[b]->response,
                  kids[a]->effective ? 0 : 1, PairKind::sibling});
          }
      } else {
        for (const auto* n : kids)
          emit({n->env_msg, n->instruction, n->response, "", n->effective ? 1 : 0, PairKind::singleton});
      }
    }
  }
  return ds;
}

void write_reward_dataset(const RewardDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& ex : ds.examples) {
    ojson j;
    j["env_msg"] = ex.env_msg;
    j["instruction"] = ex.instruction;
    j["response_i"] = ex.response_i;
    j["response_j"] = ex.response_j;
    j["preferred"] = ex.preferred;
    j["pair_kind"] = ex.pair_kind == PairKind::sibling ? "sibling" : "singleton";
    out << j.dump() << '\n';
  }
  ojson meta;
  meta["run_id"] = ds.run_id;
  meta["prompt_hash"] = ds.prompt_hash;
  meta["examples"] = ds.examples.size();
  std::ofstream(path + ".meta.json", std::ios::binary) << meta.dump(2) << '\n';
}

RewardDataset read_reward_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  RewardDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = ojson::parse(line);
      RewardExample ex;
      ex.env_msg = j.at("env_msg").get<std::string>();
      ex.instruction = j.at("instruction").get<std::string>();
      ex.response_i = j.at("response_i").get<std::string>();
      ex.response_j = j.at("response_j").get<std::string>();
      ex.preferred = j.at("preferred").get<int>();
      const auto kind = j.at("pair_kind").get<std::string>();
      if (kind != "sibling" && kind != "singleton") throw SchemaError("bad pair_kind " + kind);
      ex.pair_kind = kind == "sibling" ? PairKind::sibling : PairKind::singleton;
      ds.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("bad reward record: ") + e.what());
    }
  }
  std::ifstream meta_in(path + ".meta.json");
  if (meta_in) {
    try {
      const auto meta = ojson::parse(meta_in);
      ds.run_id = meta.value("run_id", "");
      ds.prompt_hash = meta.value("prompt_hash", "");
    } catch (const nlohmann::json::exception&) {
    }
  }
  return ds;
}

}  // namespace octo
