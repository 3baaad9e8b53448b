#include "octo/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace octo {

using nlohmann::json;

// ---------------------------------------------------------------------------
// WorldState

const ObjectInstance* WorldState::find(std::string_view id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

ObjectInstance* WorldState::find(std::string_view id) {
  for (auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

const ObjectInstance& WorldState::at(std::string_view id) const {
  const auto* o = find(id);
  if (!o) throw UnknownObject("unknown object '" + std::string(id) + "'");
  return *o;
}

bool WorldState::in_inventory(std::string_view id) const {
  return std::find(agent.inventory.begin(), agent.inventory.end(), id) != agent.inventory.end();
}

std::optional<std::string> WorldState::inventory_top() const {
  if (agent.inventory.empty()) return std::nullopt;
  return agent.inventory.back();
}

bool WorldState::has_relation(const RelationTriple& t) const {
  return std::find(relations.begin(), relations.end(), t) != relations.end();
}

std::optional<std::string> WorldState::parent(std::string_view id, Relation rel) const {
  for (const auto& r : relations)
    if (r.relation == rel && r.subject == id) return r.object;
  return std::nullopt;
}

std::vector<std::string> WorldState::inside_ancestors(std::string_view id) const {
  std::vector<std::string> out;
  std::string cur(id);
  while (auto p = parent(cur, Relation::inside)) {
    if (std::find(out.begin(), out.end(), *p) != out.end() || *p == id) break;
    out.push_back(*p);
    cur = *p;
  }
  return out;
}

bool WorldState::is_hidden(std::string_view id) const {
  for (const auto& anc : inside_ancestors(id)) {
    const auto* o = find(anc);
    if (o && o->can(UnaryState::openable) && !o->state(UnaryState::openable)) return true;
  }
  return false;
}

Vec2 WorldState::effective_position(std::string_view id) const {
  if (id == kAgentName || id == "agent" || in_inventory(id)) return agent.position;
  return at(id).position;
}

void WorldState::add_relation(RelationTriple t) {
  if (!has_relation(t)) relations.push_back(std::move(t));
}

void WorldState::remove_relations_involving(std::string_view id) {
  std::erase_if(relations, [&](const RelationTriple& r) { return r.subject == id || r.object == id; });
}

bool operator==(const WorldState& a, const WorldState& b) { return snapshot(a) == snapshot(b); }

// ---------------------------------------------------------------------------
// Loading

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

Vec2 parse_vec2(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw SchemaError(what + ": expected [x, y]");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

double normalize_heading(double deg) {
  double h = std::fmod(deg, 360.0);
  if (h < 0) h += 360.0;
  if (h >= 360.0) h = 0.0;
  return h;
}

bool bit_value(const json& v, const std::string& what) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    const auto n = v.get<long long>();
    if (n == 0 || n == 1) return n == 1;
  }
  throw SchemaError(what + ": value must be 0 or 1");
}

TargetCondition parse_condition_json(const json& j) {
  if (!j.is_array() || (j.size() != 3 && j.size() != 4))
    throw SchemaError("condition must be [object, state, value] or [object, relation, object, value]");
  for (std::size_t i = 0; i + 1 < j.size(); ++i)
    if (!j[i].is_string()) throw SchemaError("condition fields must be strings");
  TargetCondition c;
  c.subject = j[0].get<std::string>();
  c.state_or_relation = j[1].get<std::string>();
  if (j.size() == 3) {
    c.format = TargetCondition::Format::unary;
    if (!parse_unary_state(c.state_or_relation)) throw SchemaError("unknown state '" + c.state_or_relation + "'");
    c.value = bit_value(j[2], "condition");
  } else {
    c.format = TargetCondition::Format::binary;
    if (!parse_relation(c.state_or_relation)) throw SchemaError("unknown relation '" + c.state_or_relation + "'");
    c.object = j[2].get<std::string>();
    c.value = bit_value(j[3], "condition");
  }
  return c;
}

void check_no_cycles(const WorldState& w, Relation rel) {
  for (const auto& o : w.objects) {
    std::set<std::string> seen{o.id};
    std::string cur = o.id;
    while (auto p = w.parent(cur, rel)) {
      if (!seen.insert(*p).second) throw SchemaError("containment cycle through '" + o.id + "'");
      cur = *p;
    }
  }
}

}  // namespace

TaskFile parse_scene(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("scene document must be an object");
  for (const char* key : {"scene_id", "objects", "relations", "agent", "task"})
    if (!doc.contains(key)) throw SchemaError(std::string("missing key '") + key + "'");

  TaskFile out;
  WorldState& w = out.world;
  try {
    w.scene_id = doc.at("scene_id").get<std::string>();
    for (const auto& jo : doc.at("objects")) {
      ObjectInstance o;
      o.id = jo.at("id").get<std::string>();
      if (!is_identifier(o.id)) throw SchemaError("object id '" + o.id + "' is not an identifier");
      if (o.id == kAgentName) throw SchemaError("object id 'robot' is reserved");
      if (w.find(o.id)) throw SchemaError("duplicate object id '" + o.id + "'");
      o.category = jo.at("category").get<std::string>();
      o.position = parse_vec2(jo.at("position"), o.id + ".position");
      const auto size = jo.at("size_class").get<std::string>();
      if (size == "large")
        o.size_class = SizeClass::large;
      else if (size == "small")
        o.size_class = SizeClass::small;
      else
        throw SchemaError(o.id + ": size_class must be large or small");
      o.on_ground = jo.value("on_ground", false);
      o.container = jo.value("container", false);
      for (const auto& cap : jo.value("capabilities", json::array())) {
        const auto s = parse_unary_state(cap.get<std::string>());
        if (!s) throw SchemaError(o.id + ": unknown state '" + cap.get<std::string>() + "'");
        o.capabilities = static_cast<std::uint8_t>(o.capabilities | bit(*s));
      }
      if (jo.contains("states")) {
        for (const auto& [key, value] : jo.at("states").items()) {
          const auto s = parse_unary_state(key);
          if (!s) throw SchemaError(o.id + ": unknown state '" + key + "'");
          if (!o.can(*s)) throw SchemaError(o.id + ": state '" + key + "' is not among its capabilities");
          o.set_state(*s, bit_value(value, o.id + "." + key));
        }
      }
      w.objects.push_back(std::move(o));
    }

    for (const auto& jr : doc.at("relations")) {
      if (!jr.is_array() || jr.size() != 3) throw SchemaError("relation must be [subject, relation, object]");
      RelationTriple t;
      t.subject = jr[0].get<std::string>();
      const auto rel = jr[1].get<std::string>();
      t.object = jr[2].get<std::string>();
      const auto r = parse_relation(rel);
      if (!r) throw SchemaError("unknown relation '" + rel + "'");
      t.relation = *r;
      if (!w.find(t.subject)) throw SchemaError("relation references missing id '" + t.subject + "'");
      if (!w.find(t.object)) throw SchemaError("relation references missing id '" + t.object + "'");
      if (t.subject == t.object) throw SchemaError("self relation on '" + t.subject + "'");
      if ((t.relation == Relation::inside || t.relation == Relation::ontop) && w.parent(t.subject, t.relation))
        throw SchemaError("'" + t.subject + "' has more than one " + rel + " parent");
      if (w.has_relation(t)) throw SchemaError("duplicate relation");
      w.relations.push_back(std::move(t));
    }
    check_no_cycles(w, Relation::inside);
    check_no_cycles(w, Relation::ontop);

    const auto& ja = doc.at("agent");
    w.agent.position = parse_vec2(ja.at("position"), "agent.position");
    w.agent.heading = normalize_heading(ja.value("heading", 0.0));

    if (doc.contains("params")) {
      const auto& jp = doc.at("params");
      w.params.r_fpv = jp.value("r_fpv", w.params.r_fpv);
      w.params.r_near = jp.value("r_near", w.params.r_near);
      w.params.r_far = jp.value("r_far", w.params.r_far);
      w.params.d_nextto = jp.value("d_nextto", w.params.d_nextto);
      w.params.d_interact = jp.value("d_interact", w.params.d_interact);
      w.params.d_arrive = jp.value("d_arrive", w.params.d_arrive);
    }

    const auto& jt = doc.at("task");
    Task& task = out.task;
    task.name = jt.at("name").get<std::string>();
    const auto cat = jt.at("category").get<std::string>();
    if (cat == "routine")
      task.category = TaskCategory::routine;
    else if (cat == "reasoning")
      task.category = TaskCategory::reasoning;
    else
      throw SchemaError("task.category must be routine or reasoning");
    task.seen_env = jt.value("seen_env", true);
    const auto& jg = jt.at("goal");
    for (const auto& id : jg.value("inventory", json::array())) task.goal.inventory.push_back(id.get<std::string>());
    for (const auto& jc : jg.value("conditions", json::array())) {
      auto c = parse_condition_json(jc);
      const bool robot_ok = c.format == TargetCondition::Format::binary;
      auto known = [&](const std::string& id) { return (robot_ok && id == kAgentName) || w.find(id) != nullptr; };
      if (!known(c.subject) || (c.object && !known(*c.object)))
        throw SchemaError("goal condition references unknown object: " + render_condition(c));
      task.goal.conditions.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("schema violation: ") + e.what());
  }
  out.source = doc.dump();
  return out;
}

TaskFile load_scene(const std::filesystem::path& scene_file) {
  std::ifstream in(scene_file, std::ios::binary);
  if (!in) throw SchemaError("cannot open scene file " + scene_file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::vector<TaskFile> load_task_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TaskFile> out;
  for (const auto& f : files) out.push_back(load_scene(f));
  return out;
}

// ---------------------------------------------------------------------------
// Geometry and observation

double distance(const WorldState& world, std::string_view a, std::string_view b) {
  return (world.effective_position(a) - world.effective_position(b)).norm();
}

int fpv_sector(double bearing_deg, double heading_deg) {
  double rel = std::fmod(bearing_deg - heading_deg, 360.0);
  if (rel < 0) rel += 360.0;
  const int k = static_cast<int>(std::floor(rel / 45.0));
  return k >= 8 ? 0 : k;
}

namespace {

bool visible_less(const VisibleObject& a, const VisibleObject& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.id < b.id;
}

}  // namespace

ObservationBundle observe(const WorldState& world) {
  ObservationBundle bundle;
  for (const auto& o : world.objects) {
    if (world.in_inventory(o.id) || world.is_hidden(o.id)) continue;
    const Vec2 delta = o.position - world.agent.position;
    const VisibleObject rec{o.id, o.capabilities, o.states, delta.norm()};
    if (rec.distance <= world.params.r_fpv) {
      const double bearing = rec.distance == 0.0 ? world.agent.heading : std::atan2(delta.y(), delta.x()) * 180.0 / M_PI;
      bundle.fpv_sectors[fpv_sector(bearing, world.agent.heading)].push_back(rec);
    }
    if (rec.distance <= world.params.r_near) bundle.bev_near.push_back(rec);
    if (rec.distance <= world.params.r_far) bundle.bev_far.push_back(rec);
  }
  for (auto& s : bundle.fpv_sectors) std::sort(s.begin(), s.end(), visible_less);
  std::sort(bundle.bev_near.begin(), bundle.bev_near.end(), visible_less);
  std::sort(bundle.bev_far.begin(), bundle.bev_far.end(), visible_less);
  return bundle;
}

std::vector<VisibleObject> merged_observation(const ObservationBundle& bundle) {
  std::vector<VisibleObject> all;
  auto add = [&](const std::vector<VisibleObject>& layer) {
    for (const auto& r : layer)
      if (std::none_of(all.begin(), all.end(), [&](const VisibleObject& x) { return x.id == r.id; })) all.push_back(r);
  };
  for (const auto& s : bundle.fpv_sectors) add(s);
  add(bundle.bev_near);
  add(bundle.bev_far);
  std::sort(all.begin(), all.end(), visible_less);
  return all;
}

// ---------------------------------------------------------------------------
// Snapshots

namespace {

class ByteWriter {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    out_.append(s);
  }
  void vec2(const Vec2& v) {
    f64(v.x());
    f64(v.y());
  }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& in) : in_(in) {}
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  std::uint8_t u8() { return pod<std::uint8_t>(); }
  double f64() { return pod<double>(); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Vec2 vec2() {
    const double x = f64();
    return Vec2(x, f64());
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw Error("truncated snapshot");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

Snapshot snapshot(const WorldState& world) {
  ByteWriter w;
  w.str("OCTO-WORLD1");
  w.str(world.scene_id);
  w.u64(world.objects.size());
  for (const auto& o : world.objects) {
    w.str(o.id);
    w.str(o.category);
    w.vec2(o.position);
    w.u8(static_cast<std::uint8_t>(o.size_class));
    w.u8(o.on_ground);
    w.u8(o.capabilities);
    w.u8(o.states);
    w.u8(o.container);
  }
  w.u64(world.relations.size());
  for (const auto& r : world.relations) {
    w.str(r.subject);
    w.u8(static_cast<std::uint8_t>(r.relation));
    w.str(r.object);
  }
  w.vec2(world.agent.position);
  w.f64(world.agent.heading);
  w.u64(world.agent.inventory.size());
  for (const auto& id : world.agent.inventory) w.str(id);
  w.u64(world.agent.name_registry.size());
  for (const auto& [var, id] : world.agent.name_registry) {
    w.str(var);
    w.str(id);
  }
  w.u64(world.rng_seed);
  w.i64(world.step_counter);
  const auto& p = world.params;
  for (double v : {p.r_fpv, p.r_near, p.r_far, p.d_nextto, p.d_interact, p.d_arrive}) w.f64(v);
  return Snapshot{w.take()};
}

WorldState restore(const Snapshot& snap) {
  ByteReader r(snap.bytes);
  if (r.str() != "OCTO-WORLD1") throw Error("not a world snapshot");
  WorldState w;
  w.scene_id = r.str();
  const auto n_obj = r.u64();
  for (std::uint64_t i = 0; i < n_obj; ++i) {
    ObjectInstance o;
    o.id = r.str();
    o.category = r.str();
    o.position = r.vec2();
    o.size_class = static_cast<SizeClass>(r.u8());
    o.on_ground = r.u8() != 0;
    o.capabilities = r.u8();
    o.states = r.u8();
    o.container = r.u8() != 0;
    w.objects.push_back(std::move(o));
  }
  const auto n_rel = r.u64();
  for (std::uint64_t i = 0; i < n_rel; ++i) {
    RelationTriple t;
    t.subject = r.str();
    t.relation = static_cast<Relation>(r.u8());
    t.object = r.str();
    w.relations.push_back(std::move(t));
  }
  w.agent.position = r.vec2();
  w.agent.heading = r.f64();
  const auto n_inv = r.u64();
  for (std::uint64_t i = 0; i < n_inv; ++i) w.agent.inventory.push_back(r.str());
  const auto n_reg = r.u64();
  for (std::uint64_t i = 0; i < n_reg; ++i) {
    auto var = r.str();
    w.agent.name_registry[var] = r.str();
  }
  w.rng_seed = r.u64();
  w.step_counter = static_cast<int>(r.i64());
  auto& p = w.params;
  for (double* v : {&p.r_fpv, &p.r_near, &p.r_far, &p.d_nextto, &p.d_interact, &p.d_arrive}) *v = r.f64();
  if (!r.done()) throw Error("trailing bytes in snapshot");
  return w;
}

std::string world_hash(const WorldState& world) { return hex64(snapshot(world).hash()); }

// ---------------------------------------------------------------------------
// Conditions

bool check_condition(const WorldState& world, const TargetCondition& cond) {
  auto require = [&](const std::string& id, bool robot_ok) {
    if (robot_ok && id == kAgentName) return;
    if (!world.find(id)) throw UnknownObject("unknown object '" + id + "'");
  };
  if (cond.format == TargetCondition::Format::unary) {
    require(cond.subject, false);
    const auto s = parse_unary_state(cond.state_or_relation);
    if (!s) throw UnknownState("unknown state '" + cond.state_or_relation + "'");
    return world.at(cond.subject).state(*s) == cond.value;
  }
  const auto rel = parse_relation(cond.state_or_relation);
  if (!rel) throw UnknownRelation("unknown relation '" + cond.state_or_relation + "'");
  if (!cond.object) throw UnknownObject("binary condition without object");
  require(cond.subject, true);
  require(*cond.object, true);
  const auto& a = cond.subject;
  const auto& b = *cond.object;
  bool present = false;
  if (*rel == Relation::nextto && (a == kAgentName || b == kAgentName)) {
    present = a != b && distance(world, a, b) <= world.params.d_nextto;
  } else if (*rel == Relation::inside) {
    const auto anc = world.inside_ancestors(a);
    present = std::find(anc.begin(), anc.end(), b) != anc.end();
  } else {
    present = world.has_relation(RelationTriple{a, *rel, b});
  }
  return present == cond.value;
}

bool goal_satisfied(const WorldState& world, const Goal& goal) {
  for (const auto& want : goal.inventory) {
    const bool held = std::any_of(world.agent.inventory.begin(), world.agent.inventory.end(), [&](const std::string& id) {
      const auto* o = world.find(id);
      return id == want || (o && o->category == want);
    });
    if (!held) return false;
  }
  for (const auto& c : goal.conditions)
    if (!check_condition(world, c)) return false;
  return true;
}

std::string render_condition(const TargetCondition& cond) {
  std::string s = cond.subject + ", " + cond.state_or_relation + ", ";
  if (cond.object) s += *cond.object + ", ";
  s += cond.value ? "1" : "0";
  return s;
}

}  // namespace octo
