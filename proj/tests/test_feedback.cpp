#include <doctest.h>

#include <set>

#include "octo/feedback.hpp"
#include "support.hpp"

using namespace octo;
using octo::testing::task;

namespace {

StepNode make_node(int id, int parent, bool ok, const std::string& tag) {
  StepNode n;
  n.node_id = id;
  n.parent_id = parent;
  n.instruction = "subtask under " + std::to_string(parent);
  n.response = "response " + tag;
  n.env_msg = "env at " + std::to_string(parent);
  n.step_success = ok;
  n.world_before = "w" + std::to_string(parent);
  return n;
}

TaskTree make_tree(std::string name, bool success) {
  TaskTree t;
  t.task_name = std::move(name);
  t.task_success = success;
  StepNode root;
  root.instruction = t.task_name;
  root.step_success = true;
  t.nodes[0] = root;
  return t;
}

void add(TaskTree& t, StepNode n) { t.nodes[n.node_id] = std::move(n); }

std::size_t count_kind(const RewardDataset& ds, PairKind k) {
  std::size_t n = 0;
  for (const auto& e : ds.examples) n += e.pair_kind == k;
  return n;
}

}  // namespace

TEST_CASE("judge_step") {
  auto w = task("cook_bacon").world;
  TargetStates target;
  CHECK(judge_step(w, target));
  target.conditions.push_back({TargetCondition::Format::binary, "robot", "nextto", std::string("fridge_xyejdx_0"), true});
  std::string reason;
  CHECK_FALSE(judge_step(w, target, &reason));
  CHECK_FALSE(reason.empty());
  REQUIRE(execute(w, ActionCall::grounded(ActionKind::MoveBot, {"fridge_xyejdx_0"})).success);
  CHECK(judge_step(w, target, &reason));
  CHECK(reason.empty());

  TargetStates cooked;
  cooked.conditions.push_back({TargetCondition::Format::unary, "bacon_150", "cookable", std::nullopt, true});
  CHECK_FALSE(judge_step(w, cooked));

  TargetStates ghost;
  ghost.conditions.push_back({TargetCondition::Format::unary, "ghost_1", "cookable", std::nullopt, true});
  CHECK_FALSE(judge_step(w, ghost, &reason));
  CHECK(reason.find("ghost_1") != std::string::npos);

  TargetStates holding;
  holding.inventory = {"bacon"};
  CHECK_FALSE(judge_step(w, holding));
  w.agent.inventory.push_back("bacon_150");
  CHECK(judge_step(w, holding));
}

TEST_CASE("judge_task respects the step budget") {
  auto tf = task("cook_bacon");
  auto w = tf.world;
  CHECK_FALSE(judge_task(w, tf.task.goal, 10));
  w.find("bacon_150")->set_state(UnaryState::cookable, true);
  CHECK_FALSE(judge_task(w, tf.task.goal, 6));
  w.remove_relations_involving("bacon_150");
  w.add_relation({"bacon_150", Relation::ontop, "stove_rgpphy_0"});
  CHECK(judge_task(w, tf.task.goal, 6));
  CHECK(judge_task(w, tf.task.goal, 10));
  CHECK_FALSE(judge_task(w, tf.task.goal, 11));
}

TEST_CASE("task-level override") {
  auto t = make_tree("t", false);
  for (int i = 1; i <= 3; ++i) add(t, make_node(i, i - 1, true, std::to_string(i)));
  const auto failed = label_tree(t);
  for (const auto& [id, n] : failed.nodes) CHECK_FALSE(n.effective);
  CHECK(failed.nodes.at(2).step_success);
  CHECK(label_tree(failed).nodes.at(2).effective == failed.nodes.at(2).effective);
  const auto ds = build_reward_dataset({failed});
  for (const auto& e : ds.examples) CHECK((e.pair_kind != PairKind::singleton || e.preferred == 0));

  t.task_success = true;
  const auto ok = label_tree(t);
  for (const auto& [id, n] : ok.nodes) CHECK(n.effective == n.step_success);
}

TEST_CASE("reward dataset examples") {
  auto pair = make_tree("a", true);
  add(pair, make_node(1, 0, false, "f"));
  add(pair, make_node(2, 0, true, "s"));
  auto ds = build_reward_dataset({label_tree(pair)});
  REQUIRE(ds.examples.size() == 1);
  const auto& e = ds.examples[0];
  CHECK(e.pair_kind == PairKind::sibling);
  CHECK((e.preferred == 0 ? e.response_i : e.response_j) == "response s");

  auto chain = make_tree("b", true);
  for (int i = 1; i <= 4; ++i) add(chain, make_node(i, i - 1, true, std::to_string(i)));
  ds = build_reward_dataset({label_tree(chain)});
  CHECK(ds.examples.size() == 4);
  CHECK(count_kind(ds, PairKind::singleton) == 4);
  for (const auto& x : ds.examples) CHECK(x.preferred == 1);

  auto two = make_tree("c", true);
  add(two, make_node(1, 0, true, "1s"));
  add(two, make_node(2, 0, false, "1f1"));
  add(two, make_node(3, 0, false, "1f2"));
  add(two, make_node(4, 1, true, "2s"));
  add(two, make_node(5, 1, false, "2f1"));
  add(two, make_node(6, 1, false, "2f2"));
  ds = build_reward_dataset({label_tree(two)});
  CHECK(count_kind(ds, PairKind::sibling) == 4);
  CHECK(ds.examples.size() == 4);
}

TEST_CASE("pair counts and preferred index on random trees") {
  Rng rng(31);
  std::vector<TaskTree> trees;
  for (int t = 0; t < 200; ++t) {
    auto tree = make_tree("task_" + std::to_string(t), uniform_index(rng, 3) != 0);
    int next = 1;
    std::vector<int> frontier{0};
    while (next < 25 && !frontier.empty()) {
      const int parent = frontier[uniform_index(rng, frontier.size())];
      const int kids = 1 + static_cast<int>(uniform_index(rng, 4));
      for (int k = 0; k < kids; ++k) {
        auto n = make_node(next, parent, uniform_index(rng, 2) == 1, std::to_string(t) + "_" + std::to_string(next));
        n.env_msg = "env " + std::to_string(t) + " " + std::to_string(parent);
        add(tree, n);
        frontier.push_back(next++);
      }
      std::erase(frontier, parent);
    }
    trees.push_back(label_tree(tree));
  }
  const auto ds = build_reward_dataset(trees);

  std::size_t want_pairs = 0, want_singles = 0;
  std::map<std::string, bool> effective_of;
  for (const auto& tree : trees) {
    std::map<int, std::pair<int, int>> groups;  // parent -> (successes, failures)
    for (const auto& [id, n] : tree.nodes) {
      if (!n.parent_id) continue;
      effective_of[n.response] = n.effective;
      (n.effective ? groups[*n.parent_id].first : groups[*n.parent_id].second)++;
    }
    for (const auto& [p, sf] : groups) {
      if (sf.first && sf.second)
        want_pairs += static_cast<std::size_t>(sf.first * sf.second);
      else
        want_singles += static_cast<std::size_t>(sf.first + sf.second);
    }
    if (!tree.task_success)
      for (const auto& e : ds.examples)
        if (e.pair_kind == PairKind::singleton && e.env_msg.rfind("env " + tree.task_name.substr(5) + " ", 0) == 0)
          CHECK(e.preferred == 0);
  }
  CHECK(count_kind(ds, PairKind::sibling) == want_pairs);
  CHECK(count_kind(ds, PairKind::singleton) == want_singles);

  std::set<std::tuple<std::string, std::string, std::string>> triples;
  for (const auto& e : ds.examples) {
    CHECK(triples.emplace(e.env_msg, e.response_i, e.response_j).second);
    if (e.pair_kind == PairKind::sibling) {
      const auto& win = e.preferred == 0 ? e.response_i : e.response_j;
      const auto& lose = e.preferred == 0 ? e.response_j : e.response_i;
      CHECK(effective_of.at(win));
      CHECK_FALSE(effective_of.at(lose));
    } else {
      CHECK(e.response_j.empty());
      CHECK(effective_of.at(e.response_i) == (e.preferred == 1));
    }
  }
}

TEST_CASE("reward dataset JSONL round trip keeps field order") {
  auto tree = make_tree("a", true);
  add(tree, make_node(1, 0, false, "f"));
  add(tree, make_node(2, 0, true, "s \"quoted\"\nline"));
  add(tree, make_node(3, 2, true, "next"));
  auto ds = build_reward_dataset({label_tree(tree)});
  ds.run_id = "seed-7";
  ds.prompt_hash = "abc";
  const auto dir = octo::testing::scratch_dir("reward_jsonl");
  const auto path = (dir / "reward.jsonl").string();
  write_reward_dataset(ds, path);
  const auto back = read_reward_dataset(path);
  CHECK(back.run_id == "seed-7");
  CHECK(back.prompt_hash == "abc");
  REQUIRE(back.examples.size() == ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(back.examples[i].response_i == ds.examples[i].response_i);
    CHECK(back.examples[i].response_j == ds.examples[i].response_j);
    CHECK(back.examples[i].preferred == ds.examples[i].preferred);
    CHECK(back.examples[i].pair_kind == ds.examples[i].pair_kind);
  }
  const auto text = octo::testing::read_file(path);
  const auto first = text.substr(0, text.find('\n'));
  std::size_t pos = 0;
  for (const char* key : {"\"env_msg\"", "\"instruction\"", "\"response_i\"", "\"response_j\"", "\"preferred\"", "\"pair_kind\""}) {
    const auto at = first.find(key);
    REQUIRE(at != std::string::npos);
    CHECK(at >= pos);
    pos = at;
  }
}
