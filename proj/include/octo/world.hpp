#pragma once

#include <Eigen/Core>

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "octo/common.hpp"
#include "octo/vocab.hpp"

namespace octo {

using Vec2 = Eigen::Vector2d;

enum class SizeClass : std::uint8_t { large, small };

struct ObjectInstance {
  std::string id;
  std::string category;
  Vec2 position = Vec2::Zero();
  SizeClass size_class = SizeClass::small;
  bool on_ground = false;
  std::uint8_t capabilities = 0;  // bitmask over UnaryState
  std::uint8_t states = 0;        // always a subset of capabilities
  bool container = false;

  bool can(UnaryState s) const { return (capabilities & bit(s)) != 0; }
  bool state(UnaryState s) const { return (states & bit(s)) != 0; }
  void set_state(UnaryState s, bool value) {
    if (value)
      states = static_cast<std::uint8_t>(states | bit(s));
    else
      states = static_cast<std::uint8_t>(states & ~bit(s));
  }
};

struct RelationTriple {
  std::string subject;
  Relation relation = Relation::inside;
  std::string object;

  friend bool operator==(const RelationTriple&, const RelationTriple&) = default;
  friend auto operator<=>(const RelationTriple&, const RelationTriple&) = default;
};

struct AgentState {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;                            // degrees in [0, 360)
  std::vector<std::string> inventory;              // bottom .. top
  std::map<std::string, std::string> name_registry;  // variable -> object id
};

/// Observation and interaction radii in meters.
struct WorldParams {
  double r_fpv = 10.0;
  double r_near = 5.0;
  double r_far = 20.0;
  double d_nextto = 2.0;
  double d_interact = 2.0;
  double d_arrive = 1.0;
};

/// The simulator's scene graph: objects in declaration order, relations in insertion order.
struct WorldState {
  std::string scene_id;
  std::vector<ObjectInstance> objects;
  std::vector<RelationTriple> relations;
  AgentState agent;
  std::uint64_t rng_seed = 0;
  int step_counter = 0;
  WorldParams params;

  const ObjectInstance* find(std::string_view id) const;
  ObjectInstance* find(std::string_view id);
  const ObjectInstance& at(std::string_view id) const;  // throws UnknownObject

  bool in_inventory(std::string_view id) const;
  std::optional<std::string> inventory_top() const;

  bool has_relation(const RelationTriple& t) const;
  std::optional<std::string> parent(std::string_view id, Relation rel) const;
  /// Transitive `inside` ancestors, nearest first.
  std::vector<std::string> inside_ancestors(std::string_view id) const;
  /// True when some `inside` ancestor is openable and currently closed.
  bool is_hidden(std::string_view id) const;

  /// Centroid used for distance queries; held objects travel with the agent.
  Vec2 effective_position(std::string_view id) const;

  void add_relation(RelationTriple t);
  void remove_relations_involving(std::string_view id);

  friend bool operator==(const WorldState& a, const WorldState& b);
};

struct TargetCondition {
  enum class Format : std::uint8_t { unary, binary };
  Format format = Format::unary;
  std::string subject;
  std::string state_or_relation;
  std::optional<std::string> object;
  bool value = true;

  friend bool operator==(const TargetCondition&, const TargetCondition&) = default;
};

struct Goal {
  std::vector<std::string> inventory;
  std::vector<TargetCondition> conditions;
};

enum class TaskCategory : std::uint8_t { routine, reasoning };

struct Task {
  std::string name;
  TaskCategory category = TaskCategory::routine;
  Goal goal;
  bool seen_env = true;
};

/// A scene/task document: initial world plus the task posed in it.
struct TaskFile {
  WorldState world;
  Task task;
  std::string source;  // canonical JSON text of the document
};

TaskFile load_scene(const std::filesystem::path& scene_file);
TaskFile parse_scene(std::string_view json_text);
/// Task documents in a directory, sorted by file name.
std::vector<TaskFile> load_task_dir(const std::filesystem::path& dir);

inline constexpr std::string_view kAgentName = "robot";

/// Euclidean centroid distance; `a`/`b` may name the agent ("robot" or "agent").
double distance(const WorldState& world, std::string_view a, std::string_view b);

struct VisibleObject {
  std::string id;
  std::uint8_t capabilities = 0;
  std::uint8_t states = 0;
  double distance = 0.0;

  friend bool operator==(const VisibleObject&, const VisibleObject&) = default;
};

struct ObservationBundle {
  std::array<std::vector<VisibleObject>, 8> fpv_sectors;
  std::vector<VisibleObject> bev_near;
  std::vector<VisibleObject> bev_far;

  friend bool operator==(const ObservationBundle&, const ObservationBundle&) = default;
};

/// Sector index of an object at `bearing` seen with `heading` (both degrees).
int fpv_sector(double bearing_deg, double heading_deg);

ObservationBundle observe(const WorldState& world);
/// Union of all layers, deduplicated, ordered by (distance, id).
std::vector<VisibleObject> merged_observation(const ObservationBundle& bundle);

struct Snapshot {
  std::string bytes;

  std::uint64_t hash() const { return fnv1a64(bytes); }
  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

Snapshot snapshot(const WorldState& world);
WorldState restore(const Snapshot& snap);
std::string world_hash(const WorldState& world);

bool check_condition(const WorldState& world, const TargetCondition& cond);
bool goal_satisfied(const WorldState& world, const Goal& goal);

std::string render_condition(const TargetCondition& cond);

}  // namespace octo
