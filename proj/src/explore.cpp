#include "octo/explore.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <thread>

namespace octo {

using ojson = nlohmann::ordered_json;

std::string state_hash(const WorldState& world) {
  WorldState w = world;
  w.step_counter = 0;
  return world_hash(w);
}

namespace {

std::string comment_free(const Script& s) {
  Script c;
  for (const auto& st : s.statements)
    if (st.type != Stmt::Type::comment) c.statements.push_back(st);
  return render_script(c);
}

// Executes one teacher answer against `world`. On any failure the world is put back to `before`.
void execute_attempt(WorldState& world, const Snapshot& before, StepRecord& rec) {
  rec.world_before = hex64(before.hash());
  rec.state_before = state_hash(world);
  rec.response.reset();
  rec.canonical_code.clear();
  rec.executed = false;
  rec.step_success = false;
  rec.result = StepResult{};
  try {
    rec.response = parse_teacher_response(rec.teacher_text);
    const Script script = parse_script(rec.response->code);
    rec.canonical_code = comment_free(script);
    rec.result = run(resolve_names(script, world), world);
    rec.executed = rec.result.completed();
    if (!rec.executed) {
      rec.failure = rec.result.error_text;
    } else {
      std::string why;
      rec.step_success = judge_step(world, rec.response->target_states, &why);
      rec.failure = rec.step_success ? "" : "Target states not reached: " + why;
    }
  } catch (const Error& e) {
    rec.failure = e.what();
  }
  if (!rec.step_success) world = restore(before);
  rec.world_after = world_hash(world);
}

std::string instruction_for(const StepRecord& rec, std::size_t done, const std::optional<std::vector<std::string>>& plan,
                            const std::string& task_name) {
  if (rec.response && rec.response->subtasks.size() > done) return rec.response->subtasks[done];
  if (plan && plan->size() > done) return (*plan)[done];
  if (rec.response && !rec.canonical_code.empty()) {
    try {
      return describe_script(parse_script(rec.canonical_code));
    } catch (const Error&) {
    }
  }
  return "Complete " + task_name;
}

struct LoopState {
  EpisodeMemory memory;
  std::vector<std::string> completed;
  std::optional<std::string> policy_code;  // canonical form of the last attempt, as the policy would write it

  EpisodeMemory policy_memory() const {
    EpisodeMemory m = memory;
    m.original_subtasks = completed.empty() ? std::nullopt : std::optional(completed);
    m.previous_action_code = policy_code;
    return m;
  }

  void advance(const StepRecord& rec) {
    if (rec.response) {
      memory.original_subtasks = rec.response->subtasks;
      memory.previous_action_code = rec.response->code;
    } else {
      memory.previous_action_code = rec.teacher_text;
    }
    policy_code = rec.canonical_code.empty() ? rec.teacher_text : rec.canonical_code;
    memory.execution_error = rec.step_success ? std::nullopt : std::optional(rec.failure);
    if (rec.step_success) completed.push_back(rec.instruction);
  }
};

ojson response_json(const TeacherResponse& r) {
  ojson j;
  j["explain"] = r.explain;
  j["subtasks"] = r.subtasks;
  j["code"] = r.code;
  ojson conds = ojson::array();
  for (const auto& c : r.target_states.conditions) {
    ojson a = ojson::array({c.subject, c.state_or_relation});
    if (c.object) a.push_back(*c.object);
    a.push_back(c.value ? 1 : 0);
    conds.push_back(a);
  }
  j["target_states"] = {{"inventory", r.target_states.inventory}, {"conditions", conds}};
  return j;
}

TeacherResponse response_from(const ojson& j) {
  TeacherResponse r;
  r.explain = j.at("explain").get<std::string>();
  r.subtasks = j.at("subtasks").get<std::vector<std::string>>();
  r.code = j.at("code").get<std::string>();
  r.target_states.inventory = j.at("target_states").at("inventory").get<std::vector<std::string>>();
  for (const auto& a : j.at("target_states").at("conditions")) {
    TargetCondition c;
    c.subject = a.at(0).get<std::string>();
    c.state_or_relation = a.at(1).get<std::string>();
    if (a.size() == 4) {
      c.format = TargetCondition::Format::binary;
      c.object = a.at(2).get<std::string>();
    }
    c.value = a.back().get<int>() != 0;
    r.target_states.conditions.push_back(std::move(c));
  }
  return r;
}

ojson record_json(const StepRecord& r, bool sibling) {
  ojson j;
  j["record"] = sibling ? "sibling" : "step";
  j["index"] = r.index;
  j["sample"] = r.sample;
  j["env_msg"] = r.env_msg;
  j["policy_msg"] = r.policy_msg;
  j["instruction"] = r.instruction;
  j["teacher_text"] = r.teacher_text;
  j["response"] = r.response ? response_json(*r.response) : ojson(nullptr);
  j["canonical_code"] = r.canonical_code;
  j["failure"] = r.failure;
  ojson outcomes = ojson::array();
  for (const auto& o : r.result.outcomes) {
    ojson oj;
    oj["call"] = render_call(o.call);
    oj["success"] = o.success;
    oj["error"] = o.error ? ojson(std::string(name(o.error->code))) : ojson(nullptr);
    oj["narration"] = o.narration;
    outcomes.push_back(oj);
  }
  j["result"] = {{"outcomes", outcomes},
                 {"halted_at", r.result.halted_at ? ojson(*r.result.halted_at) : ojson(nullptr)},
                 {"error_text", r.result.error_text},
                 {"warnings", r.result.warnings}};
  j["executed"] = r.executed;
  j["step_success"] = r.step_success;
  j["world_before"] = r.world_before;
  j["world_after"] = r.world_after;
  j["state_before"] = r.state_before;
  return j;
}

StepRecord record_from(const ojson& j) {
  StepRecord r;
  r.index = j.at("index").get<int>();
  r.sample = j.at("sample").get<int>();
  r.env_msg = j.at("env_msg").get<std::string>();
  r.policy_msg = j.at("policy_msg").get<std::string>();
  r.instruction = j.at("instruction").get<std::string>();
  r.teacher_text = j.at("teacher_text").get<std::string>();
  if (!j.at("response").is_null()) r.response = response_from(j.at("response"));
  r.canonical_code = j.at("canonical_code").get<std::string>();
  r.failure = j.at("failure").get<std::string>();
  const auto& res = j.at("result");
  if (!res.at("halted_at").is_null()) r.result.halted_at = res.at("halted_at").get<std::size_t>();
  r.result.error_text = res.at("error_text").get<std::string>();
  r.result.warnings = res.at("warnings").get<std::vector<std::string>>();
  r.executed = j.at("executed").get<bool>();
  r.step_success = j.at("step_success").get<bool>();
  r.world_before = j.at("world_before").get<std::string>();
  r.world_after = j.at("world_after").get<std::string>();
  r.state_before = j.at("state_before").get<std::string>();
  return r;
}

std::string failure_kind(const std::string& failure) {
  if (failure.empty()) return "none";
  if (starts_with(failure, "malformed teacher response")) return "MalformedResponse";
  if (starts_with(failure, "Target states not reached")) return "TargetStates";
  const auto end = failure.find_first_of(" :");
  return failure.substr(0, end);
}

}  // namespace

Episode run_episode(const TaskFile& tf, Teacher& teacher, std::uint64_t seed, const ExploreConfig& cfg,
                    Teacher* sibling_teacher, std::vector<std::string>* transcript) {
  Episode ep;
  ep.task_name = tf.task.name;
  ep.seed = seed;
  ep.prompt_hash = system_message_hash();
  ep.teacher = teacher.kind();
  ep.teacher_view = cfg.teacher_view;
  Teacher& sib = sibling_teacher ? *sibling_teacher : teacher;

  WorldState world = tf.world;
  world.rng_seed = seed;
  world.step_counter = 0;
  world.agent.name_registry.clear();
  LoopState loop;
  loop.memory.task_goal = tf.task.name;

  auto ask = [&](Teacher& t, const TeacherQuery& q) {
    std::string text = t.ask(q);
    if (transcript) {
      ojson j;
      j["step"] = q.step;
      j["sample"] = q.sample;
      j["env_msg"] = q.env_msg;
      j["response"] = text;
      transcript->push_back(j.dump());
    }
    return text;
  };

  try {
    while (world.step_counter < cfg.budget && !goal_satisfied(world, tf.task.goal)) {
      world.step_counter += 1;
      const Snapshot before = snapshot(world);
      TeacherQuery q;
      q.system_msg = system_message();
      q.env_msg = render_env_message(world, loop.memory, cfg.teacher_view);
      q.world = &world;
      q.task = &tf.task;
      q.completed = loop.completed;
      q.step = world.step_counter;
      const std::string policy_msg = render_env_message(world, loop.policy_memory(), MessageView::observed);

      StepRecord rec;
      rec.index = world.step_counter;
      rec.env_msg = q.env_msg;
      rec.policy_msg = policy_msg;
      rec.teacher_text = ask(teacher, q);
      execute_attempt(world, before, rec);
      rec.instruction = instruction_for(rec, loop.completed.size(), loop.memory.original_subtasks, tf.task.name);

      for (int s = 1; s <= cfg.sibling_attempts; ++s) {
        WorldState scratch = restore(before);
        TeacherQuery sq = q;
        sq.world = &scratch;
        sq.sample = s;
        StepRecord srec;
        srec.index = rec.index;
        srec.sample = s;
        srec.env_msg = q.env_msg;
        srec.policy_msg = policy_msg;
        srec.teacher_text = ask(sib, sq);
        execute_attempt(scratch, before, srec);
        srec.instruction = instruction_for(srec, loop.completed.size(), loop.memory.original_subtasks, tf.task.name);
        ep.siblings.push_back(std::move(srec));
      }

      loop.advance(rec);
      ep.steps.push_back(std::move(rec));
    }
  } catch (const TeacherError& e) {
    ep.invalid = true;
    ep.invalid_reason = e.what();
  }
  ep.steps_used = world.step_counter;
  ep.outcome = !ep.invalid && judge_task(world, tf.task.goal, ep.steps_used);
  ep.final_world = world_hash(world);
  return ep;
}

std::vector<SftPair> sft_pairs(const Episode& ep, const Task& task) {
  std::vector<SftPair> out;
  if (ep.invalid || !ep.outcome) return out;
  for (const auto& s : ep.steps)
    if (s.step_success && !s.canonical_code.empty())
      out.push_back({ep.task_name, ep.seed, s.index, s.policy_msg, task.name, s.instruction, s.canonical_code});
  return out;
}

std::filesystem::path trajectory_path(const std::filesystem::path& dir, const std::string& task, std::uint64_t seed) {
  return dir / (task + "_" + std::to_string(seed) + ".traj.jsonl");
}

std::string trajectory_jsonl(const Episode& ep, const TaskFile& tf) {
  std::ostringstream out;
  ojson head;
  head["record"] = "header";
  head["task"] = ep.task_name;
  head["seed"] = ep.seed;
  head["prompt_hash"] = ep.prompt_hash;
  head["teacher"] = std::string(name(ep.teacher));
  head["teacher_view"] = ep.teacher_view == MessageView::observed ? "observed" : "scene_graph";
  head["budget"] = kStepBudget;
  head["scene"] = ojson::parse(tf.source);
  out << head.dump() << '\n';
  for (const auto& s : ep.steps) {
    out << record_json(s, false).dump() << '\n';
    for (const auto& sib : ep.siblings)
      if (sib.index == s.index) out << record_json(sib, true).dump() << '\n';
  }
  ojson tail;
  tail["record"] = "outcome";
  tail["success"] = ep.outcome;
  tail["steps_used"] = ep.steps_used;
  tail["invalid"] = ep.invalid;
  tail["invalid_reason"] = ep.invalid_reason;
  tail["final_world"] = ep.final_world;
  out << tail.dump() << '\n';
  return out.str();
}

LoadedTrajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trajectory " + path.string());
  LoadedTrajectory lt;
  std::string line;
  bool have_header = false, have_outcome = false;
  try {
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto j = ojson::parse(line);
      const auto kind = j.at("record").get<std::string>();
      if (kind == "header") {
        lt.task = parse_scene(j.at("scene").dump());
        lt.episode.task_name = j.at("task").get<std::string>();
        lt.episode.seed = j.at("seed").get<std::uint64_t>();
        lt.episode.prompt_hash = j.at("prompt_hash").get<std::string>();
        lt.episode.teacher = parse_teacher_kind(j.at("teacher").get<std::string>());
        lt.episode.teacher_view =
            j.at("teacher_view").get<std::string>() == "observed" ? MessageView::observed : MessageView::scene_graph;
        have_header = true;
      } else if (kind == "step") {
        lt.episode.steps.push_back(record_from(j));
      } else if (kind == "sibling") {
        lt.episode.siblings.push_back(record_from(j));
      } else if (kind == "outcome") {
        lt.episode.outcome = j.at("success").get<bool>();
        lt.episode.steps_used = j.at("steps_used").get<int>();
        lt.episode.invalid = j.at("invalid").get<bool>();
        lt.episode.invalid_reason = j.at("invalid_reason").get<std::string>();
        lt.episode.final_world = j.at("final_world").get<std::string>();
        have_outcome = true;
      } else {
        throw SchemaError("unknown record kind " + kind);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad trajectory " + path.string() + ": " + e.what());
  }
  if (!have_header || !have_outcome) throw SchemaError("trajectory " + path.string() + " lacks header or outcome");
  return lt;
}

ReplayReport verify_trajectory(const std::filesystem::path& path) {
  ReplayReport rep;
  LoadedTrajectory lt;
  try {
    lt = read_trajectory(path);
  } catch (const Error& e) {
    rep.message = e.what();
    return rep;
  }
  const auto& ep = lt.episode;
  if (ep.prompt_hash != system_message_hash()) {
    rep.message = "prompt hash " + ep.prompt_hash + " differs from this build's " + system_message_hash();
    return rep;
  }
  WorldState world = lt.task.world;
  world.rng_seed = ep.seed;
  world.step_counter = 0;
  world.agent.name_registry.clear();
  LoopState loop;
  loop.memory.task_goal = lt.task.task.name;
  const MessageView teacher_view = ep.teacher_view;

  auto mismatch = [&](const StepRecord& r, const std::string& what) {
    rep.ok = false;
    rep.message = "step " + std::to_string(r.index) + (r.sample ? " sample " + std::to_string(r.sample) : "") + ": " +
                  what + " mismatch";
    return rep;
  };
  auto check = [&](const StepRecord& recorded, WorldState& w, const Snapshot& before) -> std::optional<std::string> {
    StepRecord again;
    again.teacher_text = recorded.teacher_text;
    execute_attempt(w, before, again);
    if (again.world_before != recorded.world_before) return "world_before";
    if (again.world_after != recorded.world_after) return "world_after";
    if (again.step_success != recorded.step_success) return "step_success";
    if (again.failure != recorded.failure) return "failure text";
    if (again.canonical_code != recorded.canonical_code) return "canonical code";
    return std::nullopt;
  };

  for (const auto& rec : ep.steps) {
    world.step_counter += 1;
    if (rec.index != world.step_counter) return mismatch(rec, "step index");
    const Snapshot before = snapshot(world);
    if (rec.env_msg != render_env_message(world, loop.memory, teacher_view)) return mismatch(rec, "env message");
    if (rec.policy_msg != render_env_message(world, loop.policy_memory(), MessageView::observed))
      return mismatch(rec, "policy message");
    WorldState live = world;
    if (auto bad = check(rec, live, before)) return mismatch(rec, *bad);
    for (const auto& sib : ep.siblings) {
      if (sib.index != rec.index) continue;
      WorldState scratch = restore(before);
      if (auto bad = check(sib, scratch, before)) return mismatch(sib, *bad);
    }
    world = std::move(live);
    loop.advance(rec);
    ++rep.steps_verified;
  }
  if (world.step_counter != ep.steps_used) {
    rep.message = "steps_used mismatch";
    return rep;
  }
  if (world_hash(world) != ep.final_world) {
    rep.message = "final world hash mismatch";
    return rep;
  }
  if (!ep.invalid && judge_task(world, lt.task.task.goal, ep.steps_used) != ep.outcome) {
    rep.message = "task outcome mismatch";
    return rep;
  }
  rep.ok = true;
  rep.message = "OK: " + std::to_string(rep.steps_verified) + " steps verified";
  return rep;
}

CollectResult collect_dataset(const std::vector<TaskFile>& tasks, const TeacherConfig& tcfg,
                              const std::vector<std::uint64_t>& seeds, const ExploreConfig& cfg,
                              const std::filesystem::path& out_dir) {
  CollectResult out;
  struct Job {
    const TaskFile* task;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& t : tasks)
    for (auto s : seeds) jobs.push_back({&t, s});
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return std::tie(a.task->task.name, a.seed) < std::tie(b.task->task.name, b.seed);
  });

  std::unique_ptr<HttpTeacher> shared_http;
  if (tcfg.kind == TeacherKind::http && !jobs.empty()) shared_http = std::make_unique<HttpTeacher>(tcfg);

  std::vector<Episode> episodes(jobs.size());
  std::vector<std::vector<std::string>> transcripts(jobs.size());
  auto work = [&](std::size_t i) {
    const auto& job = jobs[i];
    try {
      std::unique_ptr<Teacher> own, own_sib;
      Teacher* main = nullptr;
      Teacher* sib = nullptr;
      switch (tcfg.kind) {
        case TeacherKind::oracle:
          own = std::make_unique<OracleTeacher>(tcfg.temperature);
          own_sib = std::make_unique<OracleTeacher>(cfg.sibling_temperature);
          main = own.get();
          sib = own_sib.get();
          break;
        case TeacherKind::http:
          main = sib = shared_http.get();
          break;
        case TeacherKind::replay:
          own = std::make_unique<ReplayTeacher>(transcript_path(tcfg.replay_dir, job.task->task.name, job.seed));
          main = sib = own.get();
          break;
      }
      episodes[i] = run_episode(*job.task, *main, job.seed, cfg, sib, &transcripts[i]);
    } catch (const TeacherError& e) {
      Episode ep;
      ep.task_name = job.task->task.name;
      ep.seed = job.seed;
      ep.prompt_hash = system_message_hash();
      ep.teacher = tcfg.kind;
      ep.teacher_view = cfg.teacher_view;
      ep.invalid = true;
      ep.invalid_reason = e.what();
      ep.final_world = world_hash(job.task->world);
      episodes[i] = std::move(ep);
    }
  };

  const std::size_t n_workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(cfg.workers, 1)), 1, std::max<std::size_t>(jobs.size(), 1));
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) work(i);
      });
    for (auto& t : pool) t.join();
  }

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  std::map<std::string, int> taxonomy;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& ep = episodes[i];
    const auto& tf = *jobs[i].task;
    if (!out_dir.empty()) {
      std::ofstream(trajectory_path(out_dir, ep.task_name, ep.seed), std::ios::binary) << trajectory_jsonl(ep, tf);
      std::ofstream tr(transcript_path(out_dir, ep.task_name, ep.seed), std::ios::binary);
      for (const auto& l : transcripts[i]) tr << l << '\n';
    }
    std::string line = ep.task_name + " seed " + std::to_string(ep.seed) + ": ";
    if (ep.invalid) {
      line += "invalid (" + ep.invalid_reason + ")";
    } else {
      line += std::string(ep.outcome ? "success" : "failure") + " in " + std::to_string(ep.steps_used) + " steps";
      for (const auto& s : ep.steps) taxonomy[failure_kind(s.failure)]++;
      for (const auto& s : ep.siblings) taxonomy[failure_kind(s.failure)]++;
      auto pairs = sft_pairs(ep, tf.task);
      out.sft.insert(out.sft.end(), pairs.begin(), pairs.end());
      out.trees.push_back(build_task_tree(ep));
    }
    out.log.push_back(line);
    out.episodes.push_back(ep);
  }
  for (const auto& [k, n] : taxonomy) out.log.push_back("attempt outcome " + k + ": " + std::to_string(n));
  return out;
}

void write_sft_pairs(const std::vector<SftPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& p : pairs) {
    ojson j;
    j["task"] = p.task_name;
    j["seed"] = p.seed;
    j["step"] = p.step;
    j["env_msg"] = p.env_msg;
    j["task_goal"] = p.task_goal;
    j["instruction"] = p.instruction;
    j["code"] = p.code;
    out << j.dump() << '\n';
  }
}

std::vector<SftPair> read_sft_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<SftPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = ojson::parse(line);
      out.push_back({j.at("task").get<std::string>(), j.at("seed").get<std::uint64_t>(), j.at("step").get<int>(),
                     j.at("env_msg").get<std::string>(), j.at("task_goal").get<std::string>(),
                     j.at("instruction").get<std::string>(), j.at("code").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("bad SFT record: ") + e.what());
    }
  }
  return out;
}

}  // namespace octo
