#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octo/world.hpp"

namespace octo {

// The two utility functions followed by the fourteen actions, in enumeration order.
enum class ActionKind : std::uint8_t {
  donothing,
  registry,
  EasyGrasp,
  MoveBot,
  put_ontop,
  put_inside,
  cook,
  burn,
  freeze,
  heat,
  open,
  close,
  fold,
  unfold,
  toggle_on,
  toggle_off,
};

inline constexpr std::size_t kNumActionKinds = 16;

inline constexpr std::array<std::string_view, kNumActionKinds> kActionNames = {
    "donothing", "registry", "EasyGrasp", "MoveBot", "put_ontop", "put_inside", "cook",      "burn",
    "freeze",    "heat",     "open",      "close",   "fold",      "unfold",     "toggle_on", "toggle_off"};

constexpr std::string_view name(ActionKind k) { return kActionNames[static_cast<std::size_t>(k)]; }
std::optional<ActionKind> parse_action_kind(std::string_view text);

/// What each positional argument of a function must be.
enum class Slot : std::uint8_t { env, robot, camera, object, name_literal };

const std::vector<Slot>& signature(ActionKind kind);
/// Number of object-valued arguments.
std::size_t object_arity(ActionKind kind);
/// True for the fourteen entries of the action list (not donothing/registry).
bool is_world_action(ActionKind kind);

struct Arg {
  enum class Kind : std::uint8_t { identifier, literal };
  Kind kind = Kind::identifier;
  std::string text;

  static Arg ident(std::string t) { return {Kind::identifier, std::move(t)}; }
  static Arg lit(std::string t) { return {Kind::literal, std::move(t)}; }
  friend bool operator==(const Arg&, const Arg&) = default;
};

struct ActionCall {
  ActionKind kind = ActionKind::donothing;
  std::vector<Arg> args;
  std::string binds;  // variable bound by a registry call

  /// Builds a call with reserved slots filled and object slots given as literal ids.
  static ActionCall grounded(ActionKind kind, const std::vector<std::string>& object_ids);

  friend bool operator==(const ActionCall&, const ActionCall&) = default;
};

/// Python-style source form, e.g. `MoveBot(env, robot, fridge_1, camera)`.
std::string render_call(const ActionCall& call);

enum class ActionErrorCode : std::uint8_t {
  TooFar,
  NotRegistered,
  AlreadyRegistered,
  WrongCapability,
  NotGraspable,
  NotNavigable,
  ClosedContainer,
  NotTopOfStack,
  EmptyInventory,
  UnknownObject,
};

std::string_view name(ActionErrorCode code);

struct ActionError {
  ActionErrorCode code;
  std::string message;
};

struct ActionOutcome {
  ActionCall call;
  bool success = false;
  std::optional<ActionError> error;
  std::string narration;
};

/// Applies one call. Failed calls leave the world untouched.
ActionOutcome execute(WorldState& world, const ActionCall& call);

/// Precondition check for a call whose object arguments are already resolved to ids.
std::optional<ActionError> check_preconditions(const WorldState& world, ActionKind kind,
                                               const std::vector<std::string>& object_ids);

/// Grounded calls whose preconditions hold, ordered by kind then object id; always starts with donothing.
std::vector<ActionCall> applicable_actions(const WorldState& world);

/// Unary state written by a state-changing action, with the value it sets.
std::optional<std::pair<UnaryState, bool>> state_effect(ActionKind kind);

}  // namespace octo
