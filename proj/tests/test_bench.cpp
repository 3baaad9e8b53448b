#include <doctest.h>

#include "learn_fixture.hpp"
#include "octo/bench.hpp"

using namespace octo;
using octo::testing::LearnFixture;

namespace {

TaskOutcome outcome(const std::string& name, bool seen, TaskCategory cat, bool ok, int emitted, int executed) {
  TaskOutcome o;
  o.task = name;
  o.split = Split{seen, cat};
  o.success = ok;
  o.steps_used = emitted;
  o.scripts_emitted = emitted;
  o.scripts_parsed = emitted;
  o.scripts_executed = executed;
  return o;
}

void check_recombination(const EvalReport& r) {
  const auto s = r.seen_env(), u = r.unseen_env(), f = r.routine(), q = r.reasoning(), a = r.all();
  CHECK(s.total + u.total == a.total);
  CHECK(s.successes + u.successes == a.successes);
  CHECK(f.total + q.total == a.total);
  CHECK(f.successes + q.successes == a.successes);
  if (a.total) {
    const double weighted = (s.value().value_or(0) * s.total + u.value().value_or(0) * u.total) / a.total;
    CHECK(weighted == doctest::Approx(*a.value()).epsilon(1e-15));
  }
  int hist = 0;
  for (const auto& [steps, n] : r.steps_histogram()) hist += n;
  CHECK(hist == a.total);
}

}  // namespace

TEST_CASE("split membership") {
  const auto tasks = load_task_dir(octo::testing::tasks_dir());
  CHECK(filter_tasks(tasks, in_training_split).size() == 12);
  CHECK(filter_tasks(tasks, in_heldout_reasoning).size() == 4);
  int unseen = 0;
  for (const auto& t : tasks) unseen += !t.task.seen_env;
  CHECK(unseen == 4);
}

TEST_CASE("empty report is a header") {
  EvalReport r;
  r.model = "none";
  const auto text = render_report(r);
  CHECK(text == "Model                   Seen Env  Unseen Env  Follow  Reason  All   Exec\n");
  CHECK_FALSE(r.executability().has_value());
  CHECK(report_json(r)["completion"]["all"]["total"] == 0);
}

TEST_CASE("hand-computed rates") {
  EvalReport r;
  r.model = "synthetic";
  r.outcomes = {outcome("a", true, TaskCategory::routine, true, 3, 3), outcome("b", true, TaskCategory::routine, false, 10, 4),
                outcome("c", true, TaskCategory::reasoning, true, 5, 4), outcome("d", false, TaskCategory::routine, false, 10, 0),
                outcome("e", false, TaskCategory::reasoning, true, 2, 1)};
  CHECK(*r.seen_env().value() == doctest::Approx(2.0 / 3.0));
  CHECK(*r.unseen_env().value() == 0.5);
  CHECK(*r.routine().value() == doctest::Approx(1.0 / 3.0));
  CHECK(*r.reasoning().value() == 1.0);
  CHECK(*r.all().value() == 0.6);
  CHECK(*r.executability() == doctest::Approx(12.0 / 30.0));
  const auto text = render_report(r);
  CHECK(text.find("synthetic               0.67      0.50        0.33    1.00    0.60  0.40") != std::string::npos);
  check_recombination(r);
  const auto j = report_json(r);
  CHECK(j["completion"]["seen_env"]["successes"] == 2);
  CHECK(j["tasks"].size() == 5);
}

TEST_CASE("oracle actor completes everything") {
  const auto tasks = load_task_dir(octo::testing::tasks_dir());
  const auto r = evaluate_actor(oracle_actor(), tasks, {7}, "oracle");
  CHECK(*r.all().value() == 1.0);
  CHECK(*r.where([](const TaskOutcome& o) { return o.split.seen_env && o.split.category == TaskCategory::routine; })
             .value() == 1.0);
  CHECK(*r.executability() >= *r.all().value());
  check_recombination(r);
}

TEST_CASE("random masked actor always writes parseable code") {
  const auto& f = LearnFixture::get();
  const auto r = evaluate_actor(random_actor(f.vocab), f.tasks, {7, 8}, "random");
  CHECK(*r.parse_rate() == 1.0);
  CHECK(r.all().value().has_value());
  CHECK(*r.executability() >= *r.all().value());
  check_recombination(r);
  for (const auto& o : r.outcomes) CHECK(o.steps_used <= kStepBudget);
}

TEST_CASE("policy evaluation is reproducible and executability bounds completion") {
  const auto& f = LearnFixture::get();
  const auto a = evaluate_policy(f.sft.policy, f.vocab, f.tasks, {7}, "sft");
  const auto b = evaluate_policy(f.sft.policy, f.vocab, f.tasks, {7}, "sft", 3);
  CHECK(report_json(a).dump() == report_json(b).dump());
  CHECK(render_report(a) == render_report(b));
  CHECK(*a.executability() >= *a.all().value());
  CHECK(*a.routine().value() > 0.5);
  check_recombination(a);

  const auto sampled = evaluate_actor(policy_actor(f.sft.policy, f.vocab, 1.0), f.tasks, {1, 2}, "sampled");
  CHECK(*sampled.executability() >= *sampled.all().value());
}
