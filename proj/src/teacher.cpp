#include "octo/teacher.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "octo/planner.hpp"
#include "octo/script.hpp"

namespace octo {

using json = nlohmann::json;

std::string_view name(TeacherKind kind) {
  switch (kind) {
    case TeacherKind::oracle:
      return "oracle";
    case TeacherKind::http:
      return "http";
    case TeacherKind::replay:
      return "replay";
  }
  return "?";
}

TeacherKind parse_teacher_kind(std::string_view text) {
  if (text == "oracle") return TeacherKind::oracle;
  if (text == "http") return TeacherKind::http;
  if (text == "replay") return TeacherKind::replay;
  throw Error("unknown teacher kind '" + std::string(text) + "'");
}

namespace {

// All grounded calls the scene admits by name, used as a pool of plausible mistakes.
std::vector<std::pair<ActionKind, std::vector<std::string>>> distractor_pool(const WorldState& w) {
  std::vector<std::pair<ActionKind, std::vector<std::string>>> pool;
  for (std::size_t k = static_cast<std::size_t>(ActionKind::EasyGrasp); k < kNumActionKinds; ++k) {
    const auto kind = static_cast<ActionKind>(k);
    if (object_arity(kind) == 2) {
      const auto top = w.inventory_top();
      if (!top) continue;
      for (const auto& o : w.objects)
        if (o.id != *top) pool.push_back({kind, {*top, o.id}});
    } else {
      for (const auto& o : w.objects) pool.push_back({kind, {o.id}});
    }
  }
  return pool;
}

TargetStates distractor_target(ActionKind kind, const std::vector<std::string>& ids, const WorldState& w) {
  TargetStates t;
  t.inventory = w.agent.inventory;
  using F = TargetCondition::Format;
  switch (kind) {
    case ActionKind::EasyGrasp:
      t.inventory.push_back(ids[0]);
      break;
    case ActionKind::MoveBot:
      t.conditions.push_back({F::binary, std::string(kAgentName), "nextto", ids[0], true});
      break;
    case ActionKind::put_ontop:
    case ActionKind::put_inside:
      if (!t.inventory.empty()) t.inventory.pop_back();
      t.conditions.push_back(
          {F::binary, ids[0], kind == ActionKind::put_ontop ? "ontop" : "inside", ids[1], true});
      break;
    default: {
      const auto [s, v] = *state_effect(kind);
      t.conditions.push_back({F::unary, ids[0], std::string(name(s)), std::nullopt, v});
    }
  }
  return t;
}

}  // namespace

std::string OracleTeacher::ask(const TeacherQuery& q) {
  if (!q.world || !q.task) throw TransportError("oracle teacher needs the world and task");
  TeacherResponse r = oracle_response(*q.world, *q.task, q.completed);
  if (temperature_ > 0.0) {
    Rng rng(mix_seed(mix_seed(snapshot(*q.world).hash(), fnv1a64(q.task->name)), static_cast<std::uint64_t>(q.sample)));
    const double p = 0.5 * std::min(1.0, temperature_);
    if (uniform01(rng) < p) {
      const auto pool = distractor_pool(*q.world);
      if (!pool.empty()) {
        const auto& [kind, ids] = pool[uniform_index(rng, pool.size())];
        PlanStep step{kind, ids, describe_call(kind, ids), distractor_target(kind, ids, *q.world)};
        r.code = step_code(step);
        r.target_states = step.target;
      }
    }
  }
  return render_teacher_response(r);
}

HttpTeacher::HttpTeacher(TeacherConfig config) : config_(std::move(config)), slots_(std::clamp(config_.max_parallel, 1, 64)) {
  if (config_.endpoint_url.empty()) throw TransportError("http teacher needs an endpoint URL");
  const char* key = std::getenv(std::string(kApiKeyEnv).c_str());
  if (!key || !*key) throw AuthError(std::string(kApiKeyEnv) + " is not set");
  api_key_ = key;
  const auto scheme = config_.endpoint_url.find("://");
  const auto path_start = config_.endpoint_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  host_ = config_.endpoint_url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/v1/chat/completions" : config_.endpoint_url.substr(path_start);
}

std::vector<std::string> HttpTeacher::retry_log() const {
  std::lock_guard lock(log_mu_);
  return retry_log_;
}

std::string HttpTeacher::complete(const std::string& system_msg, const std::string& user_msg) {
  json body = {{"model", config_.model_name},
               {"messages", json::array({{{"role", "system"}, {"content", system_msg}},
                                         {{"role", "user"}, {"content", user_msg}}})},
               {"temperature", config_.temperature}};
  const std::string payload = body.dump();

  struct Slot {
    std::counting_semaphore<64>& s;
    explicit Slot(std::counting_semaphore<64>& sem) : s(sem) { s.acquire(); }
    ~Slot() { s.release(); }
  } slot(slots_);

  httplib::Client cli(host_);
  const auto secs = std::chrono::duration<double>(config_.timeout);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};

  for (int attempt = 0;; ++attempt) {
    std::string failure;
    bool rate_limited = false;
    auto res = cli.Post(path_, headers, payload, "application/json");
    if (!res) {
      failure = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 401 || res->status == 403) {
      throw AuthError("teacher endpoint rejected the API key (HTTP " + std::to_string(res->status) + ")");
    } else if (res->status == 429) {
      rate_limited = true;
      failure = "rate limited (HTTP 429)";
    } else if (res->status >= 500) {
      failure = "server error (HTTP " + std::to_string(res->status) + ")";
    } else if (res->status != 200) {
      throw TransportError("unexpected HTTP status " + std::to_string(res->status));
    } else {
      json doc;
      try {
        doc = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw TransportError(std::string("response is not JSON: ") + e.what());
      }
      std::string content;
      try {
        const auto& c = doc.at("choices").at(0).at("message").at("content");
        if (c.is_string()) content = c.get<std::string>();
      } catch (const json::exception&) {
        throw EmptyCompletion("response has no choices[0].message.content");
      }
      if (trim(content).empty()) throw EmptyCompletion("teacher returned an empty completion");
      return content;
    }

    if (attempt >= config_.max_retries) {
      if (rate_limited) throw RateLimited(failure + " after " + std::to_string(attempt) + " retries");
      throw TransportError(failure + " after " + std::to_string(attempt) + " retries");
    }
    const double wait = config_.backoff_base * std::pow(2.0, attempt);
    {
      std::lock_guard lock(log_mu_);
      retry_log_.push_back("retry " + std::to_string(attempt + 1) + " after " + failure);
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
  }
}

std::string HttpTeacher::ask(const TeacherQuery& q) { return complete(q.system_msg, q.env_msg); }

ReplayTeacher::ReplayTeacher(const std::filesystem::path& transcript) : source_(transcript.string()) {
  std::ifstream in(transcript);
  if (!in) throw TransportError("cannot open transcript " + source_);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      entries_.push_back({j.at("env_msg").get<std::string>(), j.at("response").get<std::string>()});
    } catch (const json::exception& e) {
      throw TransportError("bad transcript line in " + source_ + ": " + e.what());
    }
  }
}

std::string ReplayTeacher::ask(const TeacherQuery& q) {
  if (next_ >= entries_.size()) throw TransportError("transcript " + source_ + " exhausted");
  const auto& e = entries_[next_];
  if (e.env_msg != q.env_msg)
    throw TransportError("transcript " + source_ + " diverged at request " + std::to_string(next_ + 1));
  ++next_;
  return e.response;
}

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& task, std::uint64_t seed) {
  return dir / (task + "_" + std::to_string(seed) + ".teacher.jsonl");
}

std::string teacher_ask(const TeacherConfig& config, const TeacherQuery& query) {
  switch (config.kind) {
    case TeacherKind::oracle:
      return OracleTeacher(config.temperature).ask(query);
    case TeacherKind::http:
      return HttpTeacher(config).ask(query);
    case TeacherKind::replay:
      throw TransportError("replay teachers are bound to one transcript; construct ReplayTeacher directly");
  }
  throw TransportError("unknown teacher kind");
}

}  // namespace octo
