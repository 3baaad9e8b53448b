#include "octo/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

#include "octo/planner.hpp"
#include "octo/protocol.hpp"

namespace octo {

using ojson = nlohmann::ordered_json;

namespace {

std::string comment_free(const Script& s) {
  Script c;
  for (const auto& st : s.statements)
    if (st.type != Stmt::Type::comment) c.statements.push_back(st);
  return render_script(c);
}

std::uint64_t actor_seed(const ActorInput& in) {
  return mix_seed(mix_seed(in.seed, fnv1a64(in.task.name)), static_cast<std::uint64_t>(in.step));
}

}  // namespace

bool in_training_split(const Task& t) { return t.category == TaskCategory::routine && t.seen_env; }
bool in_heldout_reasoning(const Task& t) { return t.category == TaskCategory::reasoning && t.seen_env; }

std::vector<TaskFile> filter_tasks(const std::vector<TaskFile>& tasks, bool (*keep)(const Task&)) {
  std::vector<TaskFile> out;
  for (const auto& t : tasks)
    if (keep(t.task)) out.push_back(t);
  return out;
}

Actor oracle_actor() {
  return [](const ActorInput& in) { return oracle_response(in.world, in.task, in.completed).code; };
}

Actor policy_actor(const learn::Policy& policy, const learn::TokenVocab& vocab, double temperature, int max_calls) {
  return [&policy, &vocab, temperature, max_calls](const ActorInput& in) {
    Rng rng(actor_seed(in));
    const auto tokens = learn::decode_tokens(policy, vocab, learn::featurize(in.policy_msg, in.task.name),
                                             learn::context_objects(in.policy_msg, vocab), temperature, &rng, max_calls);
    return render_script(learn::tokens_to_script(tokens, vocab));
  };
}

Actor random_actor(const learn::TokenVocab& vocab, int max_calls) {
  return [&vocab, max_calls](const ActorInput& in) {
    Rng rng(actor_seed(in));
    learn::DecodeGrammar grammar(vocab, learn::context_objects(in.policy_msg, vocab), max_calls);
    std::vector<int> tokens{learn::kBos};
    while (!grammar.done()) {
      const auto allowed = grammar.allowed();
      const int t = allowed.at(uniform_index(rng, allowed.size()));
      grammar.push(t);
      tokens.push_back(t);
    }
    return render_script(learn::tokens_to_script(tokens, vocab));
  };
}

TaskOutcome run_policy_episode(const TaskFile& tf, const Actor& actor, std::uint64_t seed, int budget) {
  TaskOutcome o;
  o.task = tf.task.name;
  o.seed = seed;
  o.split = {tf.task.seen_env, tf.task.category};
  WorldState world = tf.world;
  EpisodeMemory memory;
  memory.task_goal = tf.task.name;
  std::vector<std::string> completed;
  for (int step = 0; step < budget; ++step) {
    if (goal_satisfied(world, tf.task.goal)) break;
    memory.original_subtasks = completed.empty() ? std::nullopt : std::optional(completed);
    const std::string msg = render_env_message(world, memory, MessageView::observed);
    const std::string code = actor({world, tf.task, msg, completed, step, seed});
    ++o.steps_used;
    ++o.scripts_emitted;
    const Snapshot before = snapshot(world);
    std::string failure;
    std::string canonical = code;
    try {
      const Script script = parse_script(code);
      ++o.scripts_parsed;
      canonical = comment_free(script);
      const StepResult r = run(resolve_names(script, world), world);
      if (r.completed()) {
        ++o.scripts_executed;
        completed.push_back(describe_script(script));
      } else {
        failure = r.error_text;
      }
    } catch (const Error& e) {
      failure = e.what();
    }
    if (!failure.empty()) world = restore(before);
    memory.previous_action_code = canonical;
    memory.execution_error = failure.empty() ? std::nullopt : std::optional(failure);
  }
  o.success = judge_task(world, tf.task.goal, o.steps_used);
  return o;
}

EvalReport evaluate_actor(const Actor& actor, const std::vector<TaskFile>& tasks, const std::vector<std::uint64_t>& seeds,
                          const std::string& model, int workers) {
  std::vector<std::pair<const TaskFile*, std::uint64_t>> jobs;
  for (const auto& t : tasks)
    for (auto s : seeds) jobs.emplace_back(&t, s);
  std::sort(jobs.begin(), jobs.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first->task.name, a.second) < std::tie(b.first->task.name, b.second);
  });
  EvalReport report;
  report.model = model;
  report.outcomes.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++)
      report.outcomes[i] = run_policy_episode(*jobs[i].first, actor, jobs[i].second);
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  return report;
}

EvalReport evaluate_policy(const learn::Policy& policy, const learn::TokenVocab& vocab, const std::vector<TaskFile>& tasks,
                           const std::vector<std::uint64_t>& seeds, const std::string& model, int workers) {
  return evaluate_actor(policy_actor(policy, vocab), tasks, seeds, model, workers);
}

EvalReport::Rate EvalReport::where(const std::function<bool(const TaskOutcome&)>& keep) const {
  Rate r;
  for (const auto& o : outcomes)
    if (keep(o)) {
      ++r.total;
      r.successes += o.success ? 1 : 0;
    }
  return r;
}

EvalReport::Rate EvalReport::seen_env() const { return where([](const TaskOutcome& o) { return o.split.seen_env; }); }
EvalReport::Rate EvalReport::unseen_env() const { return where([](const TaskOutcome& o) { return !o.split.seen_env; }); }
EvalReport::Rate EvalReport::routine() const {
  return where([](const TaskOutcome& o) { return o.split.category == TaskCategory::routine; });
}
EvalReport::Rate EvalReport::reasoning() const {
  return where([](const TaskOutcome& o) { return o.split.category == TaskCategory::reasoning; });
}
EvalReport::Rate EvalReport::all() const { return where([](const TaskOutcome&) { return true; }); }

std::optional<double> EvalReport::executability() const {
  int emitted = 0, executed = 0;
  for (const auto& o : outcomes) {
    emitted += o.scripts_emitted;
    executed += o.scripts_executed;
  }
  return emitted ? std::optional(static_cast<double>(executed) / emitted) : std::nullopt;
}

std::optional<double> EvalReport::parse_rate() const {
  int emitted = 0, parsed = 0;
  for (const auto& o : outcomes) {
    emitted += o.scripts_emitted;
    parsed += o.scripts_parsed;
  }
  return emitted ? std::optional(static_cast<double>(parsed) / emitted) : std::nullopt;
}

std::map<int, int> EvalReport::steps_histogram() const {
  std::map<int, int> h;
  for (const auto& o : outcomes) ++h[o.steps_used];
  return h;
}

namespace {

std::string cell(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) { return s.size() >= width ? s : s + std::string(width - s.size(), ' '); }

ojson rate_json(const EvalReport::Rate& r) {
  ojson j;
  j["successes"] = r.successes;
  j["total"] = r.total;
  if (auto v = r.value()) j["rate"] = *v;
  else j["rate"] = nullptr;
  return j;
}

}  // namespace

std::string render_report(const EvalReport& report) {
  const std::vector<std::string> head = {"Model", "Seen Env", "Unseen Env", "Follow", "Reason", "All", "Exec"};
  const std::vector<std::size_t> width = {24, 10, 12, 8, 8, 6, 6};
  std::string out;
  auto row = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) line += i + 1 < cells.size() ? pad(cells[i], width[i]) : cells[i];
    out += line + "\n";
  };
  row(head);
  if (!report.outcomes.empty())
    row({report.model, cell(report.seen_env().value()), cell(report.unseen_env().value()), cell(report.routine().value()),
         cell(report.reasoning().value()), cell(report.all().value()), cell(report.executability())});
  return out;
}

ojson report_json(const EvalReport& report) {
  ojson j;
  j["model"] = report.model;
  ojson splits;
  splits["seen_env"] = rate_json(report.seen_env());
  splits["unseen_env"] = rate_json(report.unseen_env());
  splits["routine"] = rate_json(report.routine());
  splits["reasoning"] = rate_json(report.reasoning());
  splits["all"] = rate_json(report.all());
  j["completion"] = splits;
  if (auto e = report.executability()) j["executability"] = *e;
  else j["executability"] = nullptr;
  if (auto p = report.parse_rate()) j["parse_rate"] = *p;
  else j["parse_rate"] = nullptr;
  ojson hist = ojson::object();
  for (const auto& [steps, n] : report.steps_histogram()) hist[std::to_string(steps)] = n;
  j["steps_histogram"] = hist;
  ojson tasks = ojson::array();
  for (const auto& o : report.outcomes) {
    ojson t;
    t["task"] = o.task;
    t["seed"] = o.seed;
    t["seen_env"] = o.split.seen_env;
    t["category"] = o.split.category == TaskCategory::routine ? "routine" : "reasoning";
    t["success"] = o.success;
    t["steps_used"] = o.steps_used;
    t["scripts_emitted"] = o.scripts_emitted;
    t["scripts_parsed"] = o.scripts_parsed;
    t["scripts_executed"] = o.scripts_executed;
    tasks.push_back(t);
  }
  j["tasks"] = tasks;
  return j;
}

}  // namespace octo
