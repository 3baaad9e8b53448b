#include <doctest.h>

#include <filesystem>
#include <set>

#include "octo/explore.hpp"
#include "octo/planner.hpp"
#include "support.hpp"

using namespace octo;
using octo::testing::task;

namespace {

// Teacher whose answers always parse but whose action can never succeed.
class HopelessTeacher : public Teacher {
 public:
  std::string ask(const TeacherQuery&) override {
    TeacherResponse r;
    r.explain = "Try to cook something out of reach.";
    r.subtasks = {"Cook the ghost"};
    r.code = "def act(robot, env, camera):\n    cook(robot, \"ghost_zzzzzzzzzzzzzzzz\")\n    donothing(env)";
    return render_teacher_response(r);
  }
  TeacherKind kind() const override { return TeacherKind::oracle; }
};

// Oracle that answers one chosen step with text that has no Code section.
class GlitchyTeacher : public Teacher {
 public:
  explicit GlitchyTeacher(int bad_step) : bad_step_(bad_step) {}
  std::string ask(const TeacherQuery& q) override {
    if (q.step == bad_step_) return "Explain:\nI am confused.\nSubtasks:\n(1) Think.\n";
    return oracle_.ask(q);
  }
  TeacherKind kind() const override { return TeacherKind::oracle; }

 private:
  int bad_step_;
  OracleTeacher oracle_;
};

class DeadTeacher : public Teacher {
 public:
  std::string ask(const TeacherQuery&) override { throw TransportError("connection refused"); }
  TeacherKind kind() const override { return TeacherKind::http; }
};

std::vector<std::string> plan_text(const std::vector<PlanStep>& plan) {
  std::vector<std::string> out;
  for (const auto& s : plan) {
    std::string line(name(s.kind));
    for (const auto& id : s.object_ids) line += " " + id;
    out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_CASE("bacon plan") {
  const auto tf = task("cook_bacon");
  const auto plan = oracle_plan(tf.world, tf.task.goal);
  CHECK(plan_text(plan) == std::vector<std::string>{"MoveBot fridge_xyejdx_0", "open fridge_xyejdx_0", "EasyGrasp bacon_150",
                                                     "MoveBot stove_rgpphy_0", "put_ontop bacon_150 stove_rgpphy_0",
                                                     "cook bacon_150"});
  CHECK(step_code(plan[0]) ==
        "def act(robot, env, camera):\n    # Subtask: Move to fridge_xyejdx_0\n    fridge_xyejdx_0 = registry(env, \"fridge_xyejdx_0\")\n"
        "    MoveBot(env, robot, fridge_xyejdx_0, camera)\n    donothing(env)");
}

TEST_CASE("trivial and impossible goals") {
  const auto tf = task("cook_bacon");
  CHECK(oracle_plan(tf.world, Goal{}).empty());
  Goal impossible;
  impossible.conditions.push_back({TargetCondition::Format::unary, "bacon_150", "togglable", std::nullopt, true});
  CHECK_THROWS_AS(oracle_plan(tf.world, impossible), NoPlanFound);
}

TEST_CASE("oracle episode on the bacon task") {
  const auto tf = task("cook_bacon");
  OracleTeacher teacher;
  const auto ep = run_episode(tf, teacher, 7);
  CHECK(ep.outcome);
  CHECK(ep.steps_used <= 6);
  CHECK(ep.steps.size() == static_cast<std::size_t>(ep.steps_used));
  const auto plan = oracle_plan(tf.world, tf.task.goal);
  WorldState w = tf.world;
  for (const auto& s : plan) REQUIRE(execute(w, ActionCall::grounded(s.kind, s.object_ids)).success);
  CHECK(w.find("bacon_150")->state(UnaryState::cookable));
}

TEST_CASE("every shipped task is solved by executing its oracle plan") {
  for (const auto& tf : load_task_dir(octo::testing::tasks_dir())) {
    WorldState w = tf.world;
    const auto plan = oracle_plan(w, tf.task.goal);
    CHECK(plan.size() <= static_cast<std::size_t>(kStepBudget));
    for (const auto& s : plan) REQUIRE(execute(w, ActionCall::grounded(s.kind, s.object_ids)).success);
    CHECK(judge_task(w, tf.task.goal, static_cast<int>(plan.size())));
  }
}

TEST_CASE("unreachable goal runs out the budget") {
  auto tf = task("cook_bacon");
  tf.task.goal.conditions = {{TargetCondition::Format::unary, "bacon_150", "togglable", std::nullopt, true}};
  OracleTeacher oracle;
  const auto ep = run_episode(tf, oracle, 1);
  CHECK_FALSE(ep.outcome);
  CHECK(ep.steps_used == 10);
  CHECK(ep.steps.size() == 10);

  HopelessTeacher hopeless;
  const auto bad = run_episode(task("cook_bacon"), hopeless, 1);
  CHECK_FALSE(bad.outcome);
  CHECK(bad.steps_used == 10);
  for (const auto& s : bad.steps) {
    CHECK_FALSE(s.step_success);
    CHECK(s.world_after == s.world_before);
  }
  CHECK(bad.final_world == world_hash([&] {
          auto w = task("cook_bacon").world;
          w.rng_seed = 1;
          w.step_counter = 10;
          return w;
        }()));
}

TEST_CASE("malformed answer at step 2 is fed back at step 3") {
  GlitchyTeacher teacher(2);
  const auto ep = run_episode(task("cook_bacon"), teacher, 3);
  REQUIRE(ep.steps.size() >= 3);
  CHECK(ep.steps[0].step_success);
  CHECK_FALSE(ep.steps[1].step_success);
  CHECK_FALSE(ep.steps[1].response.has_value());
  CHECK(ep.steps[1].failure.find("Code") != std::string::npos);
  const auto msg = parse_env_message(ep.steps[2].env_msg);
  CHECK(msg.execution_error == std::optional<std::string>(ep.steps[1].failure));
  CHECK(ep.outcome);
}

TEST_CASE("transport failure marks the episode invalid") {
  DeadTeacher dead;
  const auto ep = run_episode(task("cook_bacon"), dead, 1);
  CHECK(ep.invalid);
  CHECK_FALSE(ep.outcome);
  CHECK(sft_pairs(ep, task("cook_bacon").task).empty());
}

TEST_CASE("collect over the shipped suite") {
  const auto tasks = load_task_dir(octo::testing::tasks_dir());
  REQUIRE(tasks.size() == 20);
  const auto dir = octo::testing::scratch_dir("collect");
  ExploreConfig cfg;
  cfg.sibling_attempts = 1;
  const auto res = collect_dataset(tasks, TeacherConfig{}, {7}, cfg, dir);
  int ok = 0;
  for (const auto& ep : res.episodes) {
    ok += ep.outcome;
    CHECK(ep.steps_used <= 10);
    CHECK(static_cast<int>(ep.steps.size()) == ep.steps_used);
    for (const auto& s : ep.steps)
      if (!s.step_success) CHECK(s.world_after == s.world_before);
    for (const auto& s : ep.siblings) CHECK(s.sample > 0);
  }
  CHECK(ok >= 18);
  CHECK(res.sft.size() >= 60);
  CHECK(res.trees.size() == 20);

  for (const auto& ep : res.episodes) {
    const auto rep = verify_trajectory(trajectory_path(dir, ep.task_name, ep.seed));
    CHECK_MESSAGE(rep.ok, rep.message);
  }

  const auto again = octo::testing::scratch_dir("collect_again");
  collect_dataset(tasks, TeacherConfig{}, {7}, cfg, again);
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    CHECK(octo::testing::read_file(entry.path()) == octo::testing::read_file(again / entry.path().filename()));

  TeacherConfig replay;
  replay.kind = TeacherKind::replay;
  replay.replay_dir = dir;
  const auto replayed = collect_dataset(tasks, replay, {7}, cfg);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK_FALSE(replayed.episodes[i].invalid);
    CHECK(trajectory_jsonl(replayed.episodes[i], tasks[i]).substr(0, 200).find("\"teacher\":\"replay\"") != std::string::npos);
    CHECK(replayed.episodes[i].final_world == res.episodes[i].final_world);
    CHECK(replayed.episodes[i].steps_used == res.episodes[i].steps_used);
  }
}

TEST_CASE("collect with no tasks") {
  const auto res = collect_dataset({}, TeacherConfig{}, {1, 2});
  CHECK(res.episodes.empty());
  CHECK(res.sft.empty());
  CHECK(res.trees.empty());
}

TEST_CASE("tampered trajectories fail verification") {
  const auto dir = octo::testing::scratch_dir("tamper");
  collect_dataset({task("cook_bacon")}, TeacherConfig{}, {5}, {}, dir);
  const auto path = trajectory_path(dir, "cook_bacon", 5);
  CHECK(verify_trajectory(path).ok);
  CHECK(verify_trajectory(path).message == "OK: 6 steps verified");
  auto text = octo::testing::read_file(path);
  const auto at = text.find("fridge_xyejdx_0\\\")");
  REQUIRE(at != std::string::npos);
  text.replace(at, 15, "stove_rgpphy_0 ");
  std::ofstream(path, std::ios::binary) << text;
  CHECK_FALSE(verify_trajectory(path).ok);
}

TEST_CASE("SFT pairs round trip") {
  const auto res = collect_dataset({task("cook_bacon")}, TeacherConfig{}, {7});
  const auto dir = octo::testing::scratch_dir("sft_pairs");
  write_sft_pairs(res.sft, dir / "sft.jsonl");
  const auto back = read_sft_pairs(dir / "sft.jsonl");
  REQUIRE(back.size() == res.sft.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].code == res.sft[i].code);
    CHECK(back[i].env_msg == res.sft[i].env_msg);
    CHECK(back[i].instruction == res.sft[i].instruction);
    CHECK(back[i].step == res.sft[i].step);
  }
}
