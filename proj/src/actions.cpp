#include "octo/actions.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace octo {

std::optional<ActionKind> parse_action_kind(std::string_view text) {
  for (std::size_t i = 0; i < kNumActionKinds; ++i)
    if (kActionNames[i] == text) return static_cast<ActionKind>(i);
  return std::nullopt;
}

const std::vector<Slot>& signature(ActionKind kind) {
  using S = Slot;
  static const std::vector<Slot> kDoNothing{S::env};
  static const std::vector<Slot> kRegistry{S::env, S::name_literal};
  static const std::vector<Slot> kMoveBot{S::env, S::robot, S::object, S::camera};
  static const std::vector<Slot> kPut{S::robot, S::object, S::object};
  static const std::vector<Slot> kUnary{S::robot, S::object};
  switch (kind) {
    case ActionKind::donothing:
      return kDoNothing;
    case ActionKind::registry:
      return kRegistry;
    case ActionKind::MoveBot:
      return kMoveBot;
    case ActionKind::put_ontop:
    case ActionKind::put_inside:
      return kPut;
    default:
      return kUnary;
  }
}

std::size_t object_arity(ActionKind kind) {
  std::size_t n = 0;
  for (Slot s : signature(kind)) n += s == Slot::object;
  return n;
}

bool is_world_action(ActionKind kind) { return kind != ActionKind::donothing && kind != ActionKind::registry; }

ActionCall ActionCall::grounded(ActionKind kind, const std::vector<std::string>& object_ids) {
  ActionCall call{kind, {}, {}};
  std::size_t next = 0;
  for (Slot s : signature(kind)) {
    switch (s) {
      case Slot::env:
        call.args.push_back(Arg::ident("env"));
        break;
      case Slot::robot:
        call.args.push_back(Arg::ident("robot"));
        break;
      case Slot::camera:
        call.args.push_back(Arg::ident("camera"));
        break;
      case Slot::object:
      case Slot::name_literal:
        call.args.push_back(Arg::lit(object_ids.at(next++)));
        break;
    }
  }
  return call;
}

std::string render_call(const ActionCall& call) {
  std::string s(name(call.kind));
  s += '(';
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    if (i) s += ", ";
    const auto& a = call.args[i];
    s += a.kind == Arg::Kind::literal ? "\"" + a.text + "\"" : a.text;
  }
  s += ')';
  if (!call.binds.empty()) s = call.binds + " = " + s;
  return s;
}

std::string_view name(ActionErrorCode code) {
  static constexpr std::array<std::string_view, 10> kNames = {
      "TooFar",          "NotRegistered", "AlreadyRegistered", "WrongCapability", "NotGraspable",
      "NotNavigable",    "ClosedContainer", "NotTopOfStack",   "EmptyInventory",  "UnknownObject"};
  return kNames[static_cast<std::size_t>(code)];
}

std::optional<std::pair<UnaryState, bool>> state_effect(ActionKind kind) {
  using U = UnaryState;
  switch (kind) {
    case ActionKind::cook:
      return std::pair{U::cookable, true};
    case ActionKind::burn:
      return std::pair{U::burnable, true};
    case ActionKind::freeze:
      return std::pair{U::freezable, true};
    case ActionKind::heat:
      return std::pair{U::heatable, true};
    case ActionKind::open:
      return std::pair{U::openable, true};
    case ActionKind::close:
      return std::pair{U::openable, false};
    case ActionKind::fold:
      return std::pair{U::foldable, true};
    case ActionKind::unfold:
      return std::pair{U::unfoldable, true};
    case ActionKind::toggle_on:
      return std::pair{U::togglable, true};
    case ActionKind::toggle_off:
      return std::pair{U::togglable, false};
    default:
      return std::nullopt;
  }
}

namespace {

std::string fmt_m(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f m", d);
  return buf;
}

ActionError err(ActionErrorCode code, std::string message) { return ActionError{code, std::move(message)}; }

std::optional<ActionError> check_reachable(const WorldState& w, const std::string& id) {
  const double d = distance(w, kAgentName, id);
  if (d > w.params.d_interact)
    return err(ActionErrorCode::TooFar, id + " is " + fmt_m(d) + " away; interaction range is " + fmt_m(w.params.d_interact));
  return std::nullopt;
}

std::optional<ActionError> check_visible(const WorldState& w, const std::string& id) {
  if (w.is_hidden(id)) return err(ActionErrorCode::ClosedContainer, id + " is inside a closed container");
  return std::nullopt;
}

double bearing_deg(const Vec2& from, const Vec2& to) {
  const Vec2 d = to - from;
  double b = std::atan2(d.y(), d.x()) * 180.0 / M_PI;
  if (b < 0) b += 360.0;
  if (b >= 360.0) b = 0.0;
  return b;
}

}  // namespace

std::optional<ActionError> check_preconditions(const WorldState& w, ActionKind kind,
                                               const std::vector<std::string>& ids) {
  for (const auto& id : ids)
    if (!w.find(id)) return err(ActionErrorCode::UnknownObject, "no object named " + id);

  switch (kind) {
    case ActionKind::donothing:
    case ActionKind::registry:
      return std::nullopt;

    case ActionKind::EasyGrasp: {
      const auto& o = w.at(ids[0]);
      if (w.in_inventory(o.id)) return err(ActionErrorCode::NotGraspable, o.id + " is already held");
      if (auto e = check_visible(w, o.id)) return e;
      if (o.size_class != SizeClass::small) return err(ActionErrorCode::NotGraspable, o.id + " is too large to grasp");
      return check_reachable(w, o.id);
    }

    case ActionKind::MoveBot: {
      const auto& o = w.at(ids[0]);
      if (w.in_inventory(o.id)) return err(ActionErrorCode::NotNavigable, o.id + " is held by the robot");
      if (auto e = check_visible(w, o.id)) return e;
      if (o.size_class != SizeClass::large || !o.on_ground)
        return err(ActionErrorCode::NotNavigable, o.id + " is not a large object placed on the ground");
      return std::nullopt;
    }

    case ActionKind::put_ontop:
    case ActionKind::put_inside: {
      const auto& carried = ids[0];
      const auto& target = ids[1];
      if (w.agent.inventory.empty()) return err(ActionErrorCode::EmptyInventory, "inventory is empty; cannot place " + carried);
      if (*w.inventory_top() != carried)
        return err(ActionErrorCode::NotTopOfStack, carried + " is not on top of the inventory stack (top is " + *w.inventory_top() + ")");
      if (carried == target || w.in_inventory(target))
        return err(ActionErrorCode::WrongCapability, "cannot place " + carried + " onto held object " + target);
      if (auto e = check_visible(w, target)) return e;
      if (kind == ActionKind::put_inside) {
        const auto& t = w.at(target);
        if (!t.container) return err(ActionErrorCode::WrongCapability, target + " is not a container");
        if (t.can(UnaryState::openable) && !t.state(UnaryState::openable))
          return err(ActionErrorCode::ClosedContainer, target + " is closed");
      }
      return check_reachable(w, target);
    }

    default: {
      const auto effect = state_effect(kind);
      const auto& o = w.at(ids[0]);
      if (auto e = check_visible(w, o.id)) return e;
      UnaryState needed = effect->first;
      if (!o.can(needed))
        return err(ActionErrorCode::WrongCapability, o.id + " is not " + std::string(name(needed)));
      return check_reachable(w, o.id);
    }
  }
}

ActionOutcome execute(WorldState& w, const ActionCall& call) {
  ActionOutcome out{call, false, std::nullopt, {}};
  const auto& sig = signature(call.kind);
  if (call.args.size() != sig.size())
    throw std::invalid_argument("arity mismatch for " + std::string(name(call.kind)));

  auto fail = [&](ActionError e) {
    out.narration = std::string(name(call.kind)) + " failed: " + e.message;
    out.error = std::move(e);
    return out;
  };

  if (call.kind == ActionKind::registry) {
    const auto& id = call.args[1].text;
    const auto* o = w.find(id);
    if (!o) return fail(err(ActionErrorCode::UnknownObject, "no object named " + id));
    if (w.in_inventory(id) == false && w.is_hidden(id))
      return fail(err(ActionErrorCode::UnknownObject, id + " is not observed (hidden inside a closed container)"));
    const std::string var = call.binds.empty() ? id : call.binds;
    if (w.agent.name_registry.contains(var))
      return fail(err(ActionErrorCode::AlreadyRegistered, var + " is already registered"));
    w.agent.name_registry[var] = id;
    out.success = true;
    out.narration = "registered " + id + " as " + var;
    return out;
  }

  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (sig[i] != Slot::object) continue;
    const auto& a = call.args[i];
    if (a.kind == Arg::Kind::identifier) {
      auto it = w.agent.name_registry.find(a.text);
      if (it == w.agent.name_registry.end())
        return fail(err(ActionErrorCode::NotRegistered, a.text + " has not been registered"));
      ids.push_back(it->second);
    } else {
      ids.push_back(a.text);
    }
  }

  if (auto e = check_preconditions(w, call.kind, ids)) return fail(std::move(*e));

  switch (call.kind) {
    case ActionKind::donothing:
      out.narration = "waited for capture";
      break;
    case ActionKind::EasyGrasp: {
      auto* o = w.find(ids[0]);
      w.remove_relations_involving(o->id);
      o->position = w.agent.position;
      w.agent.inventory.push_back(o->id);
      out.narration = "grasped " + o->id;
      break;
    }
    case ActionKind::MoveBot: {
      const Vec2 target = w.at(ids[0]).position;
      Vec2 away = w.agent.position - target;
      if (away.norm() == 0.0) away = Vec2(1.0, 0.0);
      w.agent.position = target + w.params.d_arrive * away.normalized();
      w.agent.heading = bearing_deg(w.agent.position, target);
      for (const auto& held : w.agent.inventory) w.find(held)->position = w.agent.position;
      out.narration = "moved in front of " + ids[0];
      break;
    }
    case ActionKind::put_ontop:
    case ActionKind::put_inside: {
      const bool inside = call.kind == ActionKind::put_inside;
      w.agent.inventory.pop_back();
      w.find(ids[0])->position = w.at(ids[1]).position;
      w.add_relation(RelationTriple{ids[0], inside ? Relation::inside : Relation::ontop, ids[1]});
      out.narration = "put " + ids[0] + (inside ? " inside " : " on top of ") + ids[1];
      break;
    }
    default: {
      auto* o = w.find(ids[0]);
      const auto [state, value] = *state_effect(call.kind);
      o->set_state(state, value);
      if (call.kind == ActionKind::fold && o->can(UnaryState::unfoldable)) o->set_state(UnaryState::unfoldable, false);
      if (call.kind == ActionKind::unfold && o->can(UnaryState::foldable)) o->set_state(UnaryState::foldable, false);
      out.narration = std::string(name(call.kind)) + " " + o->id;
      break;
    }
  }
  out.success = true;
  return out;
}

std::vector<ActionCall> applicable_actions(const WorldState& w) {
  std::vector<ActionCall> out;
  out.push_back(ActionCall::grounded(ActionKind::donothing, {}));

  std::vector<std::string> ids;
  for (const auto& o : w.objects) ids.push_back(o.id);
  std::sort(ids.begin(), ids.end());

  for (std::size_t k = static_cast<std::size_t>(ActionKind::EasyGrasp); k < kNumActionKinds; ++k) {
    const auto kind = static_cast<ActionKind>(k);
    if (object_arity(kind) == 2) {
      const auto top = w.inventory_top();
      if (!top) continue;
      for (const auto& target : ids)
        if (!check_preconditions(w, kind, {*top, target})) out.push_back(ActionCall::grounded(kind, {*top, target}));
    } else {
      for (const auto& id : ids)
        if (!check_preconditions(w, kind, {id})) out.push_back(ActionCall::grounded(kind, {id}));
    }
  }
  return out;
}

}  // namespace octo
