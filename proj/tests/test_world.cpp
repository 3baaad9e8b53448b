#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "octo/actions.hpp"
#include "octo/world.hpp"
#include "support.hpp"

using namespace octo;
using octo::testing::task;

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

const char* kMinimalTask = R"("task": {"name": "t", "category": "routine", "goal": {"inventory": [], "conditions": []}})";

std::string scene(const std::string& objects, const std::string& relations) {
  return R"({"scene_id": "s", "objects": [)" + objects + R"(], "relations": [)" + relations +
         R"(], "agent": {"position": [0, 0], "heading": 0}, )" + kMinimalTask + "}";
}

const std::string kBox = R"({"id": "box_1", "category": "box", "position": [1, 0], "size_class": "small", "container": true})";
const std::string kBall = R"({"id": "ball_2", "category": "ball", "position": [1, 1], "size_class": "small"})";

// Ancestors by walking the stored triples directly.
bool hidden_by_walk(const WorldState& w, const std::string& id) {
  std::string cur = id;
  for (int guard = 0; guard < 64; ++guard) {
    const RelationTriple* up = nullptr;
    for (const auto& r : w.relations)
      if (r.subject == cur && r.relation == Relation::inside) up = &r;
    if (!up) return false;
    const auto* parent = w.find(up->object);
    if (parent->can(UnaryState::openable) && !parent->state(UnaryState::openable)) return true;
    cur = up->object;
  }
  return false;
}

int sector_oracle(double bearing, double heading) {
  double rel = bearing - heading;
  while (rel < 0) rel += 360;
  while (rel >= 360) rel -= 360;
  int k = 0;
  for (int b = 1; b < 8; ++b)
    if (rel >= 45.0 * b) k = b;
  return k;
}

WorldState random_world(Rng& rng, int n) {
  WorldState w;
  for (int i = 0; i < n; ++i) {
    ObjectInstance o;
    o.id = "obj_" + std::to_string(i);
    o.category = "obj";
    o.position = Vec2(20 * uniform01(rng) - 10, 20 * uniform01(rng) - 10);
    w.objects.push_back(o);
  }
  w.agent.position = Vec2(20 * uniform01(rng) - 10, 20 * uniform01(rng) - 10);
  return w;
}

}  // namespace

TEST_CASE("bacon scene loads with nested containment") {
  const auto tf = task("cook_bacon");
  const auto& w = tf.world;
  CHECK(w.has_relation({"bacon_150", Relation::inside, "tray_156"}));
  CHECK(w.has_relation({"tray_156", Relation::inside, "fridge_xyejdx_0"}));
  CHECK(w.inside_ancestors("bacon_150") == std::vector<std::string>{"tray_156", "fridge_xyejdx_0"});
  CHECK(fmt2(distance(w, "robot", "bacon_150")) == "1.89");
  CHECK(fmt2(distance(w, "robot", "fridge_xyejdx_0")) == "2.12");
  CHECK(fmt2(distance(w, "robot", "stove_rgpphy_0")) == "1.59");
  CHECK(fmt2(distance(w, "robot", "tray_156")) == "1.85");
  CHECK(fmt2(distance(w, "robot", "griddle_157")) == "1.68");
}

TEST_CASE("scene schema") {
  SUBCASE("empty objects") {
    const auto tf = parse_scene(scene("", ""));
    CHECK(tf.world.objects.empty());
    CHECK(tf.world.relations.empty());
  }
  SUBCASE("relation to a missing id") {
    CHECK_THROWS_AS(parse_scene(scene(kBox, R"(["ball_9", "inside", "box_1"])")), SchemaError);
  }
  SUBCASE("duplicate id") { CHECK_THROWS_AS(parse_scene(scene(kBox + "," + kBox, "")), SchemaError); }
  SUBCASE("unknown relation") {
    CHECK_THROWS_AS(parse_scene(scene(kBox + "," + kBall, R"(["ball_2", "beside", "box_1"])")), SchemaError);
  }
  SUBCASE("unknown state") {
    CHECK_THROWS_AS(parse_scene(scene(R"({"id": "a_1", "category": "a", "position": [0, 1], "size_class": "small",
                                          "capabilities": ["edible"]})",
                                      "")),
                    SchemaError);
  }
  SUBCASE("containment cycle") {
    CHECK_THROWS_AS(parse_scene(scene(kBox + "," + kBall, R"(["ball_2", "inside", "box_1"], ["box_1", "inside", "ball_2"])")),
                    SchemaError);
  }
  SUBCASE("two inside parents") {
    const std::string cup = R"({"id": "cup_3", "category": "cup", "position": [0, 2], "size_class": "small"})";
    CHECK_THROWS_AS(
        parse_scene(scene(kBox + "," + kBall + "," + cup, R"(["ball_2", "inside", "box_1"], ["ball_2", "inside", "cup_3"])")),
        SchemaError);
  }
  SUBCASE("identical bytes give identical worlds") {
    const auto text = scene(kBox + "," + kBall, R"(["ball_2", "inside", "box_1"])");
    CHECK(world_hash(parse_scene(text).world) == world_hash(parse_scene(text).world));
  }
}

TEST_CASE("distance is a metric on random placements") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const WorldState w = random_world(rng, 4);
    CHECK(distance(w, "robot", "robot") == 0.0);
    for (const auto& a : w.objects)
      for (const auto& b : w.objects) {
        const double ab = distance(w, a.id, b.id);
        CHECK(ab == distance(w, b.id, a.id));
        CHECK(ab >= 0.0);
        CHECK(ab == doctest::Approx(std::hypot(a.position.x() - b.position.x(), a.position.y() - b.position.y())));
        for (const auto& c : w.objects) CHECK(distance(w, a.id, c.id) <= ab + distance(w, b.id, c.id) + 1e-9);
      }
  }
  CHECK_THROWS_AS(distance(task("cook_bacon").world, "robot", "ghost_1"), UnknownObject);
}

TEST_CASE("fpv sector matches the exhaustive bearing sweep") {
  for (double heading : {0.0, 10.0, 45.0, 90.0, 179.5, 270.0, 359.0})
    for (double bearing = -180.0; bearing < 540.0; bearing += 0.25)
      REQUIRE(fpv_sector(bearing, heading) == sector_oracle(bearing, heading));

  WorldState w;
  ObjectInstance o;
  o.id = "lamp_1";
  o.category = "lamp";
  o.position = Vec2(0.0, 3.0);  // bearing 90 degrees
  w.objects.push_back(o);
  const auto b = observe(w);
  REQUIRE(b.fpv_sectors[2].size() == 1);
  CHECK(b.fpv_sectors[2][0].id == "lamp_1");
  CHECK(b.fpv_sectors.size() == 8);
}

TEST_CASE("closed containers hide their contents") {
  auto w = task("cook_bacon").world;
  auto ids = [](const std::vector<VisibleObject>& v) {
    std::vector<std::string> out;
    for (const auto& r : v) out.push_back(r.id);
    return out;
  };
  auto seen = ids(merged_observation(observe(w)));
  CHECK(std::find(seen.begin(), seen.end(), "bacon_150") == seen.end());
  CHECK(std::find(seen.begin(), seen.end(), "fridge_xyejdx_0") != seen.end());
  w.find("fridge_xyejdx_0")->set_state(UnaryState::openable, true);
  seen = ids(merged_observation(observe(w)));
  CHECK(std::find(seen.begin(), seen.end(), "bacon_150") != seen.end());
}

TEST_CASE("observation soundness and ordering along random walks") {
  Rng rng(5);
  for (const auto& tf : load_task_dir(octo::testing::tasks_dir())) {
    WorldState w = tf.world;
    for (int step = 0; step < 25; ++step) {
      const auto b = observe(w);
      CHECK(b == observe(w));
      std::vector<const std::vector<VisibleObject>*> layers{&b.bev_near, &b.bev_far};
      for (const auto& s : b.fpv_sectors) layers.push_back(&s);
      for (const auto* layer : layers) {
        for (std::size_t i = 0; i < layer->size(); ++i) {
          const auto& r = (*layer)[i];
          CHECK_FALSE(hidden_by_walk(w, r.id));
          CHECK_FALSE(w.in_inventory(r.id));
          if (i > 0) {
            const auto& p = (*layer)[i - 1];
            CHECK((p.distance < r.distance || (p.distance == r.distance && p.id < r.id)));
          }
        }
      }
      for (const auto& r : b.bev_near) CHECK(r.distance <= w.params.r_near);
      for (const auto& r : b.bev_far) CHECK(r.distance <= w.params.r_far);
      const auto acts = applicable_actions(w);
      execute(w, acts[uniform_index(rng, acts.size())]);
    }
  }
}

TEST_CASE("snapshot and restore") {
  const auto tf = task("cook_bacon");
  WorldState w = tf.world;
  w.rng_seed = 1234;
  w.step_counter = 3;
  const Snapshot s = snapshot(w);
  CHECK(snapshot(w) == s);
  CHECK(snapshot(restore(s)) == s);
  CHECK(restore(s).rng_seed == 1234);
  CHECK(restore(s).step_counter == 3);
  w.find("fridge_xyejdx_0")->set_state(UnaryState::openable, true);
  w.agent.position = Vec2(1, 1);
  CHECK_FALSE(snapshot(w) == s);
  w = restore(s);
  CHECK(snapshot(w) == s);
}

TEST_CASE("fnv-1a values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("fridge") == 12232244603861171380ULL);
  CHECK(fnv1a64("bacon_150") == 6240215976664776241ULL);
}

TEST_CASE("check_condition") {
  auto w = task("cook_bacon").world;
  auto unary = [](std::string s, std::string st, bool v) {
    return TargetCondition{TargetCondition::Format::unary, std::move(s), std::move(st), std::nullopt, v};
  };
  auto binary = [](std::string s, std::string r, std::string o, bool v) {
    return TargetCondition{TargetCondition::Format::binary, std::move(s), std::move(r), std::move(o), v};
  };
  CHECK_FALSE(check_condition(w, binary("bacon_150", "inside", "tray_156", false)));
  CHECK(check_condition(w, binary("bacon_150", "inside", "fridge_xyejdx_0", true)));
  CHECK_FALSE(check_condition(w, unary("fridge_xyejdx_0", "openable", true)));
  execute(w, ActionCall::grounded(ActionKind::MoveBot, {"fridge_xyejdx_0"}));
  CHECK(check_condition(w, binary("robot", "nextto", "fridge_xyejdx_0", true)));
  execute(w, ActionCall::grounded(ActionKind::open, {"fridge_xyejdx_0"}));
  CHECK(check_condition(w, unary("fridge_xyejdx_0", "openable", true)));
  CHECK_THROWS_AS(check_condition(w, unary("ghost_1", "openable", true)), UnknownObject);
  CHECK_THROWS_AS(check_condition(w, unary("bacon_150", "edible", true)), UnknownState);
  CHECK_THROWS_AS(check_condition(w, binary("bacon_150", "beside", "tray_156", true)), UnknownRelation);
}
