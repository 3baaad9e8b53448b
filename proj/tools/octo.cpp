#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "octo/bench.hpp"
#include "octo/explore.hpp"
#include "octo/learn/checkpoint.hpp"
#include "octo/learn/train.hpp"

namespace fs = std::filesystem;
using namespace octo;
using namespace octo::learn;

namespace {

constexpr int kExitBadFlags = 2;
constexpr int kExitFailed = 1;

class BadFlags : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::uint64_t seed = 7;
  std::string tasks = "tasks";
  std::string teacher = "oracle";
  std::string teacher_url;
  std::string model;
  std::string replay_dir;
  std::string config;
  std::string out;
  double beta = 0.1;
  int siblings = 1;
  bool binary = false;
};

std::vector<TaskFile> load_tasks(const std::string& path) {
  if (fs::is_directory(path)) return load_task_dir(path);
  if (fs::is_regular_file(path)) return {load_scene(path)};
  throw BadFlags("--tasks: no such file or directory: " + path);
}

nlohmann::json read_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw BadFlags("--config: cannot read " + path);
  try {
    auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw BadFlags("--config must hold a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw BadFlags(std::string("--config: ") + e.what());
  }
}

struct Settings {
  TeacherConfig teacher;
  TrainConfig train;
  ExploreConfig explore;
};

// Defaults, then the config file, then explicit flags.
Settings resolve(const CLI::App& cmd, const Common& c, TrainConfig train_defaults) {
  Settings s;
  s.explore.sibling_attempts = c.siblings;  // one sibling by default so the reward data has pairs
  s.train = train_defaults;
  s.train.seed = c.seed;
  const auto cfg = read_config(c.config);
  nlohmann::json train_keys = nlohmann::json::object();
  try {
    for (const auto& [key, v] : cfg.items()) {
      if (key == "kind") s.teacher.kind = parse_teacher_kind(v.get<std::string>());
      else if (key == "endpoint_url") s.teacher.endpoint_url = v.get<std::string>();
      else if (key == "model_name") s.teacher.model_name = v.get<std::string>();
      else if (key == "timeout") s.teacher.timeout = v.get<double>();
      else if (key == "max_retries") s.teacher.max_retries = v.get<int>();
      else if (key == "temperature") s.teacher.temperature = v.get<double>();
      else if (key == "backoff_base") s.teacher.backoff_base = v.get<double>();
      else if (key == "max_parallel") s.teacher.max_parallel = v.get<int>();
      else if (key == "replay_dir") s.teacher.replay_dir = v.get<std::string>();
      else if (key == "sibling_attempts") s.explore.sibling_attempts = v.get<int>();
      else if (key == "sibling_temperature") s.explore.sibling_temperature = v.get<double>();
      else if (key == "workers") s.explore.workers = v.get<int>();
      else train_keys[key] = v;
    }
    s.train = TrainConfig::from_json(train_keys, s.train);
  } catch (const nlohmann::json::exception& e) {
    throw BadFlags(std::string("--config: ") + e.what());
  } catch (const Error& e) {
    throw BadFlags(std::string("--config: ") + e.what());
  }
  auto given = [&](const char* flag) {
    const auto* opt = cmd.get_option_no_throw(flag);
    return opt && opt->count() > 0;
  };
  if (given("--seed")) s.train.seed = c.seed;
  if (given("--beta")) s.train.beta = c.beta;
  if (given("--teacher")) {
    try {
      s.teacher.kind = parse_teacher_kind(c.teacher);
    } catch (const Error& e) {
      throw BadFlags(std::string("--teacher: ") + e.what());
    }
  }
  if (given("--teacher-url")) s.teacher.endpoint_url = c.teacher_url;
  if (given("--model")) s.teacher.model_name = c.model;
  if (given("--replay-dir")) s.teacher.replay_dir = c.replay_dir;
  if (given("--siblings")) s.explore.sibling_attempts = c.siblings;
  if (s.teacher.kind == TeacherKind::http && s.teacher.endpoint_url.empty())
    throw BadFlags("--teacher http needs --teacher-url");
  if (s.teacher.kind == TeacherKind::replay && s.teacher.replay_dir.empty())
    throw BadFlags("--teacher replay needs --replay-dir");
  return s;
}

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--tasks", c.tasks, "Task directory or single task file")->capture_default_str();
  cmd->add_option("--config", c.config, "JSON file with TrainConfig/TeacherConfig keys");
  cmd->add_option("--out", c.out, "Output path")->capture_default_str();
}

void add_teacher(CLI::App* cmd, Common& c) {
  cmd->add_option("--teacher", c.teacher, "Teacher kind")->check(CLI::IsMember({"oracle", "http", "replay"}));
  cmd->add_option("--teacher-url", c.teacher_url, "Chat-completions endpoint");
  cmd->add_option("--model", c.model, "Teacher model name");
  cmd->add_option("--replay-dir", c.replay_dir, "Directory of recorded teacher transcripts");
  cmd->add_option("--siblings", c.siblings, "Extra sampled attempts per step")->check(CLI::NonNegativeNumber);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<SftPair> training_pairs(const std::vector<SftPair>& pairs, const std::vector<TaskFile>& tasks, bool all) {
  std::set<std::string> keep;
  for (const auto& t : tasks)
    if (all || in_training_split(t.task)) keep.insert(t.task.name);
  std::vector<SftPair> out;
  for (const auto& p : pairs)
    if (keep.contains(p.task_name)) out.push_back(p);
  return out;
}

Checkpoint load_kind(const std::string& path, const std::string& kind) {
  if (!fs::is_regular_file(path)) throw BadFlags("no such checkpoint: " + path);
  Checkpoint c = load_checkpoint(path);
  if (c.kind != kind) throw BadFlags(path + " holds a " + c.kind + " model, expected " + kind);
  return c;
}

int cmd_simulate(const CLI::App& cmd, const Common& c, const std::string& task_name) {
  const Settings s = resolve(cmd, c, TrainConfig::sft_defaults());
  const auto tasks = load_tasks(c.tasks);
  const TaskFile* tf = tasks.empty() ? nullptr : &tasks.front();
  if (!task_name.empty()) {
    tf = nullptr;
    for (const auto& t : tasks)
      if (t.task.name == task_name) tf = &t;
  }
  if (!tf) throw BadFlags("--task: not found: " + task_name);
  TeacherConfig tc = s.teacher;
  std::unique_ptr<Teacher> teacher;
  switch (tc.kind) {
    case TeacherKind::oracle: teacher = std::make_unique<OracleTeacher>(tc.temperature); break;
    case TeacherKind::http: teacher = std::make_unique<HttpTeacher>(tc); break;
    case TeacherKind::replay:
      teacher = std::make_unique<ReplayTeacher>(transcript_path(tc.replay_dir, tf->task.name, s.train.seed));
      break;
  }
  const Episode ep = run_episode(*tf, *teacher, s.train.seed, s.explore);
  for (const auto& step : ep.steps) {
    std::cout << "=== step " << step.index << " environment message\n" << step.env_msg << "\n";
    std::cout << "=== step " << step.index << " response\n" << step.teacher_text << "\n";
    std::cout << "=== step " << step.index << ": " << (step.step_success ? "success" : "failed: " + step.failure) << "\n";
  }
  std::cout << "task " << ep.task_name << ": " << (ep.outcome ? "completed" : "incomplete") << " in " << ep.steps_used
            << " steps\n";
  return 0;
}

int cmd_collect(const CLI::App& cmd, const Common& c) {
  const Settings s = resolve(cmd, c, TrainConfig::sft_defaults());
  const auto tasks = load_tasks(c.tasks);
  const fs::path out = c.out;
  const auto r = collect_dataset(tasks, s.teacher, {s.train.seed}, s.explore, out);
  write_sft_pairs(r.sft, out / "sft.jsonl");
  RewardDataset ds = build_reward_dataset(r.trees);
  ds.run_id = "seed-" + std::to_string(s.train.seed);
  ds.prompt_hash = system_message_hash();
  write_reward_dataset(ds, (out / "reward.jsonl").string());
  std::string log;
  for (const auto& line : r.log) log += line + "\n";
  write_text(out / "collect.log", log);
  int successes = 0;
  for (const auto& ep : r.episodes) successes += ep.outcome ? 1 : 0;
  std::cout << log;
  std::cout << "episodes " << r.episodes.size() << ", successes " << successes << ", sft pairs " << r.sft.size()
            << ", reward examples " << ds.examples.size() << "\n";
  return 0;
}

int cmd_train_sft(const CLI::App& cmd, const Common& c, const std::string& data, bool all_tasks) {
  const Settings s = resolve(cmd, c, TrainConfig::sft_defaults());
  const auto tasks = load_tasks(c.tasks);
  const TokenVocab vocab = vocab_for_tasks(tasks);
  const auto pairs = training_pairs(read_sft_pairs(data), tasks, all_tasks);
  if (pairs.empty()) throw Error("no training pairs in " + data);
  const auto examples = make_sft_examples(pairs, vocab, s.train.feature_dim);
  const SftResult r = sft_train(examples, vocab.size(), s.train);
  const double acc = sft_accuracy(r.policy, vocab, examples, s.train.max_calls);
  Checkpoint ck{"policy", s.train, vocab, r.policy, std::nullopt, {}};
  ck.meta["stage"] = "sft";
  ck.meta["examples"] = examples.size();
  ck.meta["final_loss"] = r.losses.empty() ? 0.0 : r.losses.back();
  ck.meta["train_accuracy"] = acc;
  save_checkpoint(ck, c.out, c.binary ? ParamEncoding::binary : ParamEncoding::base64);
  std::printf("sft: %zu examples, loss %.6f -> %.6f, exact-script accuracy %.4f, wrote %s\n", examples.size(),
              r.losses.empty() ? 0.0 : r.losses.front(), r.losses.empty() ? 0.0 : r.losses.back(), acc, c.out.c_str());
  return 0;
}

int cmd_train_reward(const CLI::App& cmd, const Common& c, const std::string& data) {
  const Settings s = resolve(cmd, c, TrainConfig::reward_defaults());
  const auto tasks = load_tasks(c.tasks);
  const RewardDataset ds = read_reward_dataset(data);
  const RewardTrainResult r = reward_train(ds, s.train);
  Checkpoint ck{"reward", s.train, vocab_for_tasks(tasks), std::nullopt, r.model, {}};
  ck.meta["stage"] = "reward";
  ck.meta["run_id"] = ds.run_id;
  ck.meta["prompt_hash"] = ds.prompt_hash;
  ck.meta["train_pairs"] = r.train_pairs;
  ck.meta["heldout_pairs"] = r.heldout_pairs;
  save_checkpoint(ck, c.out, c.binary ? ParamEncoding::binary : ParamEncoding::base64);
  std::printf("reward: %zu examples, train pairs %d, held-out pairs %d, train accuracy %.4f, held-out accuracy %.4f, wrote %s\n",
              ds.examples.size(), r.train_pairs, r.heldout_pairs, r.train_accuracy, r.heldout_accuracy, c.out.c_str());
  return 0;
}

int cmd_train_rlef(const CLI::App& cmd, const Common& c, const std::string& policy_path, const std::string& reward_path,
                   const std::string& data) {
  const Checkpoint sft = load_kind(policy_path, "policy");
  const Checkpoint rew = load_kind(reward_path, "reward");
  TrainConfig defaults = TrainConfig::ppo_defaults();
  defaults.hidden = sft.config.hidden;
  defaults.feature_dim = sft.config.feature_dim;
  defaults.max_len = sft.config.max_len;
  defaults.max_calls = sft.config.max_calls;
  const Settings s = resolve(cmd, c, defaults);
  const auto tasks = load_tasks(c.tasks);
  const auto pairs = training_pairs(read_sft_pairs(data), tasks, false);
  const auto contexts = make_ppo_contexts(pairs, sft.vocab, s.train.feature_dim);
  const PpoResult r = ppo_train(*sft.policy, sft.vocab, contexts, reward_model_fn(*rew.reward, contexts, sft.vocab), s.train);
  Checkpoint ck{"policy", s.train, sft.vocab, r.policy, std::nullopt, {}};
  ck.meta["stage"] = "rlef";
  ck.meta["contexts"] = contexts.size();
  ck.meta["reward_trace"] = r.reward_trace;
  ck.meta["kl_trace"] = r.kl_trace;
  ck.meta["skipped_batches"] = r.skipped_batches;
  save_checkpoint(ck, c.out, c.binary ? ParamEncoding::binary : ParamEncoding::base64);
  const double r0 = r.reward_trace.empty() ? 0.0 : r.reward_trace.front();
  const double r1 = r.reward_trace.empty() ? 0.0 : r.reward_trace.back();
  std::printf("rlef: %zu contexts, beta %g, mean reward %.4f -> %.4f, final KL %.6f, wrote %s\n", contexts.size(),
              s.train.beta, r0, r1, r.kl_trace.empty() ? 0.0 : r.kl_trace.back(), c.out.c_str());
  return 0;
}

int cmd_eval(const CLI::App& cmd, const Common& c, const std::string& policy, double min_completion) {
  const Settings s = resolve(cmd, c, TrainConfig::sft_defaults());
  const auto tasks = load_tasks(c.tasks);
  std::optional<Checkpoint> ck;
  TokenVocab vocab = vocab_for_tasks(tasks);
  Actor actor;
  std::string model = policy;
  if (policy == "oracle") {
    actor = oracle_actor();
  } else if (policy == "random") {
    actor = random_actor(vocab);
  } else {
    ck = load_kind(policy, "policy");
    vocab = ck->vocab;
    actor = policy_actor(*ck->policy, vocab, 0.0, ck->config.max_calls);
    model = fs::path(policy).filename().string();
  }
  const EvalReport report = evaluate_actor(actor, tasks, {s.train.seed}, model);
  const std::string table = render_report(report);
  const fs::path out = c.out;
  write_text(out / "report.txt", table);
  write_text(out / "report.json", report_json(report).dump(2) + "\n");
  std::cout << table;
  const auto all = report.all().value();
  if (min_completion > 0 && (!all || *all < min_completion)) {
    std::printf("completion %.2f below --min-completion %.2f\n", all.value_or(0.0), min_completion);
    return kExitFailed;
  }
  return 0;
}

int cmd_replay(const std::vector<std::string>& files) {
  int rc = 0;
  for (const auto& f : files) {
    const ReplayReport r = verify_trajectory(f);
    std::cout << (files.size() > 1 ? f + ": " : "") << r.message << "\n";
    if (!r.ok) rc = kExitFailed;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embodied agent pipeline: simulate, collect, train, evaluate, replay"};
  app.require_subcommand(1);

  Common sim_c, col_c, sft_c, rew_c, rl_c, ev_c;
  std::string sim_task, sft_data = "run/sft.jsonl", rew_data = "run/reward.jsonl", rl_data = "run/sft.jsonl";
  std::string rl_policy = "sft.ckpt", rl_reward = "reward.ckpt", ev_policy;
  bool sft_all = false;
  double min_completion = 0.0;
  std::vector<std::string> replay_files;

  auto* sim = app.add_subcommand("simulate", "Run one teacher-driven episode and print the messages");
  add_common(sim, sim_c, "");
  add_teacher(sim, sim_c);
  sim->add_option("--task", sim_task, "Task name (default: first task)");

  auto* col = app.add_subcommand("collect", "Explore with the teacher and write trajectories and datasets");
  add_common(col, col_c, "run");
  add_teacher(col, col_c);

  auto* sft = app.add_subcommand("train-sft", "Supervised fine-tuning on collected pairs");
  add_common(sft, sft_c, "sft.ckpt");
  sft->add_option("--data", sft_data, "SFT pairs JSONL")->capture_default_str();
  sft->add_flag("--all-tasks", sft_all, "Train on every task instead of the routine seen-scene split");
  sft->add_flag("--binary", sft_c.binary, "Store parameters as raw bytes instead of base64");

  auto* rew = app.add_subcommand("train-reward", "Fit the reward model on the environmental reward dataset");
  add_common(rew, rew_c, "reward.ckpt");
  rew->add_option("--data", rew_data, "Reward dataset JSONL")->capture_default_str();
  rew->add_flag("--binary", rew_c.binary, "Store parameters as raw bytes instead of base64");

  auto* rl = app.add_subcommand("train-rlef", "PPO with a KL penalty against the SFT policy");
  add_common(rl, rl_c, "rlef.ckpt");
  rl->add_option("--policy", rl_policy, "SFT policy checkpoint")->capture_default_str();
  rl->add_option("--reward", rl_reward, "Reward model checkpoint")->capture_default_str();
  rl->add_option("--data", rl_data, "SFT pairs JSONL supplying the contexts")->capture_default_str();
  rl->add_option("--beta", rl_c.beta, "KL penalty weight")->check(CLI::NonNegativeNumber);
  rl->add_flag("--binary", rl_c.binary, "Store parameters as raw bytes instead of base64");

  auto* ev = app.add_subcommand("eval", "Evaluate a policy over the task suite");
  add_common(ev, ev_c, "eval");
  ev->add_option("--policy", ev_policy, "Checkpoint path, 'oracle' or 'random'")->required();
  ev->add_option("--min-completion", min_completion, "Exit 1 when overall completion is below this")
      ->check(CLI::Range(0.0, 1.0));

  auto* rep = app.add_subcommand("replay", "Re-execute trajectory files and verify every hash");
  rep->add_option("files", replay_files, "Trajectory files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitBadFlags;
  }

  try {
    if (*sim) return cmd_simulate(*sim, sim_c, sim_task);
    if (*col) return cmd_collect(*col, col_c);
    if (*sft) return cmd_train_sft(*sft, sft_c, sft_data, sft_all);
    if (*rew) return cmd_train_reward(*rew, rew_c, rew_data);
    if (*rl) return cmd_train_rlef(*rl, rl_c, rl_policy, rl_reward, rl_data);
    if (*ev) return cmd_eval(*ev, ev_c, ev_policy, min_completion);
    if (*rep) return cmd_replay(replay_files);
  } catch (const BadFlags& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadFlags;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return 0;
}
