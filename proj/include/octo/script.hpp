#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octo/actions.hpp"
#include "octo/world.hpp"

namespace octo {

struct Stmt {
  enum class Type : std::uint8_t { assign, call, comment };
  Type type = Type::call;
  int line = 0;        // 1-based line in the source text
  ActionCall call;     // assign: registry call with `binds` set
  std::string text;    // comment body
  std::optional<std::string> unresolved;  // set by resolve_names when a literal matches no object
};

struct Script {
  std::vector<std::string> comments;
  std::vector<Stmt> statements;
  std::string source_text;

  /// Statements that are not comments.
  std::size_t executable_count() const;
};

enum class ParseErrorKind : std::uint8_t { BadHeader, UnknownFunction, BadArity, BadToken, DisallowedConstruct };

std::string_view name(ParseErrorKind kind);

class ParseError : public Error {
 public:
  ParseError(int line, ParseErrorKind kind, const std::string& message);
  int line() const { return line_; }
  ParseErrorKind kind() const { return kind_; }

 private:
  int line_;
  ParseErrorKind kind_;
};

/// Parses an `act(robot, env, camera)` program, optionally wrapped in code fences.
Script parse_script(std::string_view source);

/// Canonical text: one statement per line, four-space indent.
std::string render_script(const Script& script);

/// Normalised Levenshtein similarity of the lower-cased strings, in [0, 1].
double name_similarity(std::string_view a, std::string_view b);

inline constexpr double kMinNameSimilarity = 0.4;

/// Best-matching object id for a literal: highest similarity, ties to the smallest id.
std::optional<std::string> resolve_object_name(std::string_view literal, const WorldState& world);

Script resolve_names(const Script& script, const WorldState& world);

struct StepResult {
  std::vector<ActionOutcome> outcomes;
  std::optional<std::size_t> halted_at;  // index into statements
  std::string error_text = "No error";
  std::vector<std::string> warnings;

  bool completed() const { return !halted_at.has_value(); }
};

/// Executes statements in order, stopping at the first failure. The registry is scoped to one run.
StepResult run(const Script& script, WorldState& world);

/// Short natural description of the world actions in a script, e.g. "Open fridge_1".
std::string describe_script(const Script& script);
std::string describe_call(ActionKind kind, const std::vector<std::string>& object_ids);

/// Object ids referenced by a statement's object slots (after registry lookup within the script).
std::vector<std::string> call_object_ids(const ActionCall& call, const std::map<std::string, std::string>& bindings);

}  // namespace octo
