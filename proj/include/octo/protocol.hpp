#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "octo/world.hpp"

namespace octo {

/// Which scene graph feeds the message: what the agent can currently observe, or the simulator's
/// exact graph (every object in declaration order, hidden ones included).
enum class MessageView : std::uint8_t { observed, scene_graph };

struct ObservedObjectEntry {
  std::string id;
  std::vector<std::pair<std::string, bool>> states;
  double distance = 0.0;
};

struct EnvironmentMessage {
  std::vector<ObservedObjectEntry> observed_objects;
  std::vector<RelationTriple> observed_relations;
  std::optional<std::vector<std::string>> inventory;
  std::string task_goal;
  std::optional<std::vector<std::string>> original_subtasks;
  std::optional<std::string> previous_action_code;
  std::optional<std::string> execution_error;
};

/// What the episode loop remembers between steps.
struct EpisodeMemory {
  std::string task_goal;
  std::optional<std::vector<std::string>> original_subtasks;
  std::optional<std::string> previous_action_code;
  std::optional<std::string> execution_error;
};

inline constexpr std::string_view kEnvMessageInstruction =
    "Now, please output Explain, Subtasks (revise if necessary), Code that completing the next subtask, and Target "
    "States, according to the instruction above. Remember you can only use the functions provided above and pay "
    "attention to the response format.";

EnvironmentMessage build_env_message(const WorldState& world, const EpisodeMemory& memory,
                                     MessageView view = MessageView::observed);
std::string render_env_message(const EnvironmentMessage& msg);
std::string render_env_message(const WorldState& world, const EpisodeMemory& memory,
                               MessageView view = MessageView::observed);

/// Strict reader for the rendered layout; throws Error on any deviation.
EnvironmentMessage parse_env_message(std::string_view text);

/// The versioned agent system message and its FNV-1a hash (hex).
const std::string& system_message();
const std::string& system_message_hash();
inline constexpr std::string_view kSystemMessageVersion = "v1";

struct TargetStates {
  std::vector<std::string> inventory;  // empty means "None"
  std::vector<TargetCondition> conditions;

  friend bool operator==(const TargetStates&, const TargetStates&) = default;
};

struct TeacherResponse {
  std::string explain;
  std::vector<std::string> subtasks;
  std::string code;
  TargetStates target_states;

  friend bool operator==(const TeacherResponse&, const TeacherResponse&) = default;
};

class MalformedResponse : public Error {
 public:
  MalformedResponse(std::string section, std::string reason);
  const std::string& section() const { return section_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string section_;
  std::string reason_;
};

TeacherResponse parse_teacher_response(std::string_view text);
std::string render_teacher_response(const TeacherResponse& response);

/// Parses one target-state line such as "(a) robot, nextto, fridge_1, 1" or "[apple_2, cookable, 1]".
TargetCondition parse_condition_line(std::string_view line);

}  // namespace octo
