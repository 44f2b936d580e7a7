#include <catch2/catch_amalgamated.hpp>

#include "handcam/rng.hpp"
#include "handcam/sim.hpp"

using namespace handcam;

namespace {

EnvConfig one_cube_config() {
  EnvConfig cfg;
  cfg.id = "test_one_cube";
  SpawnSpec cube;
  cube.prototype.id = 0;
  cube.prototype.shape = ObjectShape::kSquare;
  cube.prototype.color = {200, 40, 40};
  cube.prototype.half_size = 0.035f;
  cube.range = Rect{0.3f, 0.3f, 0.7f, 0.7f};
  cfg.objects.push_back(cube);
  cfg.max_steps = 200;
  return cfg;
}

bool states_equal(const WorldState& a, const WorldState& b) {
  if (a.gx != b.gx || a.gy != b.gy || a.gz != b.gz) return false;
  if (a.grip != b.grip || a.held_object != b.held_object) return false;
  if (a.objects.size() != b.objects.size()) return false;
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    const auto& x = a.objects[i];
    const auto& y = b.objects[i];
    if (x.id != y.id || x.x != y.x || x.y != y.y || x.resting != y.resting) return false;
  }
  return a.step_count == b.step_count;
}

}  // namespace

TEST_CASE("reset is deterministic in (config, seed)") {
  EnvConfig cfg = one_cube_config();
  WorldState a = reset(cfg, 12345);
  WorldState b = reset(cfg, 12345);
  CHECK(states_equal(a, b));
  WorldState c = reset(cfg, 12346);
  CHECK_FALSE(states_equal(a, c));
}

TEST_CASE("reset starts lifted with open gripper") {
  WorldState st = reset(one_cube_config(), 7);
  CHECK(st.gz == 1.0f);
  CHECK(st.grip == Grip::kOpen);
  CHECK(st.held_object == -1);
  CHECK(st.step_count == 0);
}

TEST_CASE("zero-area spawn range places the object exactly at the corner") {
  EnvConfig cfg = one_cube_config();
  cfg.objects[0].range = Rect{0.4f, 0.6f, 0.4f, 0.6f};
  WorldState st = reset(cfg, 99);
  CHECK(st.objects[0].x == 0.4f);
  CHECK(st.objects[0].y == 0.6f);
}

TEST_CASE("reset rejects impossible spawn ranges") {
  EnvConfig cfg = one_cube_config();
  // two objects forced onto the same point always overlap
  SpawnSpec second = cfg.objects[0];
  second.prototype.id = 1;
  cfg.objects[0].range = Rect{0.5f, 0.5f, 0.5f, 0.5f};
  second.range = Rect{0.5f, 0.5f, 0.5f, 0.5f};
  cfg.objects.push_back(second);
  CHECK_THROWS_WITH(reset(cfg, 1), Catch::Matchers::ContainsSubstring("1000"));

  EnvConfig bad = one_cube_config();
  bad.objects[0].range = Rect{0.9f, 0.9f, 1.2f, 1.0f};
  CHECK_THROWS_WITH(reset(bad, 1), Catch::Matchers::ContainsSubstring("workspace"));
}

TEST_CASE("object positions are uniform over the spawn range (chi-square at 0.01)") {
  EnvConfig cfg = one_cube_config();
  const Rect r = cfg.objects[0].range;
  const int n = 1000, bins = 10;
  std::vector<int> bx(bins, 0), by(bins, 0);
  for (int i = 0; i < n; ++i) {
    WorldState st = reset(cfg, 1000 + i);
    int ix = std::min(bins - 1, (int)((st.objects[0].x - r.x0) / (r.x1 - r.x0) * bins));
    int iy = std::min(bins - 1, (int)((st.objects[0].y - r.y0) / (r.y1 - r.y0) * bins));
    bx[ix]++;
    by[iy]++;
  }
  // chi-square critical value for df=9 at alpha=0.01 is 21.666
  const double expect = (double)n / bins;
  double chi_x = 0, chi_y = 0;
  for (int i = 0; i < bins; ++i) {
    chi_x += (bx[i] - expect) * (bx[i] - expect) / expect;
    chi_y += (by[i] - expect) * (by[i] - expect) / expect;
  }
  CHECK(chi_x < 21.666);
  CHECK(chi_y < 21.666);
}

TEST_CASE("idle open-gripper action changes nothing but the step count") {
  WorldState st = reset(one_cube_config(), 3);
  WorldState next = step(st, Action{0, 0, 0, 1.0f});
  CHECK(next.gx == st.gx);
  CHECK(next.gy == st.gy);
  CHECK(next.gz == st.gz);
  CHECK(next.grip == Grip::kOpen);
  CHECK(next.held_object == -1);
  CHECK(next.step_count == st.step_count + 1);
}

TEST_CASE("close transition at depth near an object attaches it") {
  EnvConfig cfg = one_cube_config();
  WorldState st = reset(cfg, 5);
  st.gx = st.objects[0].x;
  st.gy = st.objects[0].y;
  st.gz = cfg.sim.z_grasp;
  REQUIRE(st.grip == Grip::kOpen);
  WorldState next = step(st, Action{0, 0, 0, -1.0f});
  CHECK(next.held_object == 0);
  CHECK_FALSE(next.objects[0].resting);
  CHECK(next.objects[0].x == next.gx);

  // merely staying closed never re-attaches
  WorldState dropped = step(next, Action{0, 0, 0, 1.0f});  // release
  CHECK(dropped.held_object == -1);
  CHECK(dropped.objects[0].resting);
  WorldState against = dropped;
  against.grip = Grip::kClosed;  // already closed, no open->closed transition
  WorldState after = step(against, Action{0, 0, 0, -1.0f});
  CHECK(after.held_object == -1);
}

TEST_CASE("attach requires depth and proximity") {
  EnvConfig cfg = one_cube_config();
  WorldState st = reset(cfg, 8);
  st.gx = st.objects[0].x;
  st.gy = st.objects[0].y;
  st.gz = 0.9f;  // too high
  CHECK(step(st, Action{0, 0, 0, -1.0f}).held_object == -1);

  st.gz = cfg.sim.z_grasp;
  st.gx = clamp01(st.objects[0].x + cfg.sim.grasp_radius + 0.02f);  // too far
  CHECK(step(st, Action{0, 0, 0, -1.0f}).held_object == -1);
}

TEST_CASE("held object follows the gripper and releases in place") {
  EnvConfig cfg = one_cube_config();
  WorldState st = reset(cfg, 11);
  st.gx = st.objects[0].x;
  st.gy = st.objects[0].y;
  st.gz = cfg.sim.z_grasp;
  st = step(st, Action{0, 0, 0, -1.0f});
  REQUIRE(st.held_object == 0);
  st = step(st, Action{1.0f, 0.5f, 1.0f, -1.0f});
  CHECK(st.objects[0].x == st.gx);
  CHECK(st.objects[0].y == st.gy);
  CHECK_FALSE(st.objects[0].resting);
  const float drop_x = st.gx, drop_y = st.gy;
  st = step(st, Action{0, 0, 0, 1.0f});
  CHECK(st.held_object == -1);
  CHECK(st.objects[0].resting);
  CHECK(st.objects[0].x == drop_x);
  CHECK(st.objects[0].y == drop_y);
}

TEST_CASE("scripted 40-step grasp-and-lift sequence succeeds") {
  EnvConfig cfg = one_cube_config();
  WorldState st = reset(cfg, 21);
  const float tx = st.objects[0].x, ty = st.objects[0].y;
  // step-by-step simulation oracle: move over the cube, descend, close, lift
  int steps = 0;
  auto drive = [&](float dx, float dy, float dz, float grip) {
    st = step(st, Action{dx, dy, dz, grip});
    ++steps;
  };
  while (std::abs(st.gx - tx) > 1e-4f || std::abs(st.gy - ty) > 1e-4f) {
    const float dx = std::clamp((tx - st.gx) / cfg.sim.step_gain, -1.0f, 1.0f);
    const float dy = std::clamp((ty - st.gy) / cfg.sim.step_gain, -1.0f, 1.0f);
    drive(dx, dy, 0, 1.0f);
    REQUIRE(steps < 60);
  }
  while (st.gz > cfg.sim.z_grasp) {
    drive(0, 0, std::clamp((cfg.sim.z_grasp - st.gz) / cfg.sim.step_gain, -1.0f, 1.0f), 1.0f);
    REQUIRE(steps < 60);
  }
  drive(0, 0, 0, -1.0f);
  REQUIRE(st.held_object == 0);
  while (st.gz < cfg.sim.z_lift) {
    drive(0, 0, 1.0f, -1.0f);
    REQUIRE(steps < 60);
  }
  CHECK(st.held_object == 0);
  CHECK(st.gz >= cfg.sim.z_lift);
  CHECK(steps <= 45);

  TaskSpec grasp;
  grasp.kind = TaskKind::kGrasp;
  grasp.target_id = 0;
  CHECK(success(st, grasp));
}

TEST_CASE("coordinates never leave the workspace under random actions") {
  EnvConfig cfg = one_cube_config();
  cfg.max_steps = 100000;
  WorldState st = reset(cfg, 77);
  Rng rng(77);
  for (int i = 0; i < 100000; ++i) {
    Action a{(float)rng.uniform(-3, 3), (float)rng.uniform(-3, 3), (float)rng.uniform(-3, 3),
             (float)rng.uniform(-2, 2)};
    st = step(st, a);
    REQUIRE(st.gx >= 0.0f);
    REQUIRE(st.gx <= 1.0f);
    REQUIRE(st.gy >= 0.0f);
    REQUIRE(st.gy <= 1.0f);
    REQUIRE(st.gz >= 0.0f);
    REQUIRE(st.gz <= 1.0f);
    // conservation: one object, held xor resting
    REQUIRE(st.objects.size() == 1);
    if (st.held_object >= 0) REQUIRE_FALSE(st.objects[0].resting);
    if (st.held_object < 0) REQUIRE(st.objects[0].resting);
  }
}

TEST_CASE("step on a terminal state is rejected") {
  EnvConfig cfg = one_cube_config();
  cfg.max_steps = 1;
  WorldState st = reset(cfg, 1);
  st = step(st, Action{});
  CHECK(st.terminal());
  CHECK_THROWS_AS(step(st, Action{}), SimError);
}

TEST_CASE("success predicates over a fresh reset are all false") {
  EnvConfig cfg = one_cube_config();
  // keep the decal away from the spawn range so pick_place can't start solved
  WorldState st = reset(cfg, 31);

  TaskSpec reach_t;
  reach_t.kind = TaskKind::kReach;
  TaskSpec grasp_t;
  grasp_t.kind = TaskKind::kGrasp;
  TaskSpec place_t;
  place_t.kind = TaskKind::kPickPlace;
  place_t.goal_region = Rect{0.8f, 0.8f, 0.95f, 0.95f};
  TaskSpec clear_t;
  clear_t.kind = TaskKind::kClear;
  clear_t.plate_region = Rect{0.0f, 0.0f, 1.0f, 1.0f};

  CHECK_FALSE(success(st, reach_t));
  CHECK_FALSE(success(st, grasp_t));
  CHECK_FALSE(success(st, place_t));
  CHECK_FALSE(success(st, clear_t));
}

TEST_CASE("grasp success requires holding the target at height") {
  EnvConfig cfg = one_cube_config();
  WorldState st = reset(cfg, 41);
  TaskSpec grasp_t;
  grasp_t.kind = TaskKind::kGrasp;
  st.held_object = 0;
  st.objects[0].resting = false;
  st.gz = 1.0f;
  CHECK(success(st, grasp_t));
  st.gz = 0.2f;
  CHECK_FALSE(success(st, grasp_t));
}

TEST_CASE("stack and clear predicates") {
  EnvConfig cfg = one_cube_config();
  SpawnSpec blue = cfg.objects[0];
  blue.prototype.id = 1;
  blue.prototype.color = {40, 60, 200};
  blue.range = Rect{0.15f, 0.15f, 0.25f, 0.25f};
  cfg.objects.push_back(blue);
  WorldState st = reset(cfg, 51);

  TaskSpec stack_t;
  stack_t.kind = TaskKind::kStack;
  stack_t.target_id = 0;
  stack_t.base_id = 1;
  CHECK_FALSE(success(st, stack_t));
  st.objects[0].x = st.objects[1].x + 0.01f;
  st.objects[0].y = st.objects[1].y;
  CHECK(success(st, stack_t));

  TaskSpec clear_t;
  clear_t.kind = TaskKind::kClear;
  clear_t.target_id = 0;
  clear_t.plate_region = Rect{0.0f, 0.0f, 0.5f, 0.5f};
  st.objects[0].x = 0.2f;
  st.objects[0].y = 0.2f;
  CHECK_FALSE(success(st, clear_t));
  st.objects[0].x = 0.8f;
  CHECK(success(st, clear_t));

  TaskSpec missing;
  missing.kind = TaskKind::kGrasp;
  missing.target_id = 42;
  CHECK_THROWS_WITH(success(st, missing), Catch::Matchers::ContainsSubstring("42"));
}
