#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

#include "octo/protocol.hpp"
#include "octo/world.hpp"

namespace octo {

class TeacherError : public Error {
 public:
  using Error::Error;
};
class TransportError : public TeacherError {
 public:
  using TeacherError::TeacherError;
};
class AuthError : public TeacherError {
 public:
  using TeacherError::TeacherError;
};
class RateLimited : public TeacherError {
 public:
  using TeacherError::TeacherError;
};
class EmptyCompletion : public TeacherError {
 public:
  using TeacherError::TeacherError;
};

enum class TeacherKind : std::uint8_t { oracle, http, replay };
std::string_view name(TeacherKind kind);
TeacherKind parse_teacher_kind(std::string_view text);

inline constexpr std::string_view kApiKeyEnv = "OCTO_TEACHER_API_KEY";

struct TeacherConfig {
  TeacherKind kind = TeacherKind::oracle;
  std::string endpoint_url;
  std::string model_name = "gpt-4-32k";
  double timeout = 60.0;  // seconds
  int max_retries = 3;
  double temperature = 0.0;
  double backoff_base = 1.0;  // seconds; doubles after each retry
  int max_parallel = 4;
  std::filesystem::path replay_dir;
};

/// Everything a teacher may look at for one request.
struct TeacherQuery {
  std::string system_msg;
  std::string env_msg;
  const WorldState* world = nullptr;
  const Task* task = nullptr;
  std::vector<std::string> completed;  // subtasks achieved so far
  int step = 0;
  int sample = 0;  // 0 for the main attempt, >0 for extra sibling attempts
};

class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::string ask(const TeacherQuery& query) = 0;
  virtual TeacherKind kind() const = 0;
};

/// Planner-backed teacher. At temperature > 0 it sometimes swaps the planned action for a
/// distractor, chosen by a stream seeded from (world hash, task, sample).
class OracleTeacher : public Teacher {
 public:
  explicit OracleTeacher(double temperature = 0.0) : temperature_(temperature) {}
  std::string ask(const TeacherQuery& query) override;
  TeacherKind kind() const override { return TeacherKind::oracle; }

 private:
  double temperature_;
};

/// Chat-completions client. Safe to share between threads.
class HttpTeacher : public Teacher {
 public:
  explicit HttpTeacher(TeacherConfig config);  // throws AuthError without an API key
  std::string ask(const TeacherQuery& query) override;
  TeacherKind kind() const override { return TeacherKind::http; }

  std::string complete(const std::string& system_msg, const std::string& user_msg);
  std::vector<std::string> retry_log() const;

 private:
  TeacherConfig config_;
  std::string api_key_;
  std::string host_;  // scheme://host[:port]
  std::string path_;
  std::counting_semaphore<64> slots_;
  mutable std::mutex log_mu_;
  std::vector<std::string> retry_log_;
};

/// Serves responses recorded in a <task>_<seed>.teacher.jsonl transcript, in order.
class ReplayTeacher : public Teacher {
 public:
  explicit ReplayTeacher(const std::filesystem::path& transcript);
  std::string ask(const TeacherQuery& query) override;
  TeacherKind kind() const override { return TeacherKind::replay; }

 private:
  struct Entry {
    std::string env_msg;
    std::string response;
  };
  std::vector<Entry> entries_;
  std::size_t next_ = 0;
  std::string source_;
};

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& task, std::uint64_t seed);

/// One-shot request with a freshly built teacher. Oracle needs world and task in `query`.
std::string teacher_ask(const TeacherConfig& config, const TeacherQuery& query);

}  // namespace octo
