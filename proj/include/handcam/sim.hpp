#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "handcam/rng.hpp"

namespace handcam {

class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Grip : std::uint8_t { kOpen, kClosed };
enum class Skin : std::uint8_t { kRobot, kHuman };
enum class ObjectShape : std::uint8_t { kSquare, kDisc };
enum class TaskKind : std::uint8_t { kReach, kGrasp, kPickPlace, kStack, kClear };

using Color = std::array<std::uint8_t, 3>;

struct Rect {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(float x, float y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
};

struct SceneObject {
  int id = 0;
  ObjectShape shape = ObjectShape::kSquare;
  Color color{200, 40, 40};
  float half_size = 0.035f;  // workspace units
  float x = 0.5f, y = 0.5f;
  bool resting = true;
};

// dx, dy, dz in [-1,1]; gripper in [-1,1] with binary semantics (-1 close, +1 open).
struct Action {
  float dx = 0, dy = 0, dz = 0, gripper = 1.0f;

  Action clamped() const {
    auto c = [](float v) { return std::clamp(v, -1.0f, 1.0f); };
    return Action{c(dx), c(dy), c(dz), c(gripper)};
  }
};

inline Grip grip_from_command(float gripper) {
  return gripper >= 0.0f ? Grip::kOpen : Grip::kClosed;
}

struct CameraModel {
  int h = 64, w = 64;
  float f0 = 0.30f;  // workspace units across the image at z=0
  float k = 1.0f;    // fov growth with height

  float fov(float z) const { return f0 * (1.0f + k * z); }
};

// Physical thresholds; all distances in workspace units.
struct SimParams {
  float step_gain = 0.05f;
  float z_grasp = 0.10f;
  float grasp_radius = 0.06f;
  float z_lift = 0.50f;
};

struct BackgroundSpec {
  enum class Kind : std::uint8_t { kSolid, kChecker, kStripes, kNoise } kind = Kind::kChecker;
  Color color_a{230, 230, 228};
  Color color_b{160, 160, 164};
  float cell = 0.08f;           // texture period in workspace units
  std::uint32_t noise_seed = 1; // for Kind::kNoise

  std::string describe() const {
    std::ostringstream os;
    os << "bg(kind=" << (int)kind << ",a=" << (int)color_a[0] << "." << (int)color_a[1] << "."
       << (int)color_a[2] << ",b=" << (int)color_b[0] << "." << (int)color_b[1] << "."
       << (int)color_b[2] << ",cell=" << cell << ",seed=" << noise_seed << ")";
    return os.str();
  }
};

// A region painted onto the background (goal zone, plate). Not interactive.
struct Decal {
  Rect region;
  Color color{60, 160, 60};
  bool disc = true;
};

struct SpawnSpec {
  SceneObject prototype;
  Rect range;  // uniform spawn rectangle for the object center
};

struct TaskSpec {
  TaskKind kind = TaskKind::kGrasp;
  int target_id = 0;
  int base_id = -1;          // stack base object
  float reach_radius = 0.08f;
  float z_grasp = 0.10f;     // depth threshold for reach success
  float z_lift = 0.50f;      // lift threshold for grasp success
  float stack_radius = 0.05f;
  Rect goal_region;          // pick_place target zone
  Rect plate_region;         // clear source zone

  std::string describe() const {
    std::ostringstream os;
    os << "task(kind=" << (int)kind << ",target=" << target_id << ",base=" << base_id
       << ",reach_r=" << reach_radius << ",z_grasp=" << z_grasp << ",z_lift=" << z_lift
       << ",stack_r=" << stack_radius << ",goal=" << goal_region.x0 << ":" << goal_region.y0
       << ":" << goal_region.x1 << ":" << goal_region.y1 << ",plate=" << plate_region.x0
       << ":" << plate_region.y0 << ":" << plate_region.x1 << ":" << plate_region.y1 << ")";
    return os.str();
  }
};

struct EnvConfig {
  std::string id = "env";
  BackgroundSpec background;
  std::optional<Decal> decal;
  std::vector<SpawnSpec> objects;
  Rect gripper_spawn{0.25f, 0.25f, 0.75f, 0.75f};
  Skin skin = Skin::kRobot;
  std::string task_id = "grasp";
  int max_steps = 60;
  CameraModel camera;
  SimParams sim;
  std::optional<Rect> occluder;

  std::string describe() const {
    std::ostringstream os;
    os << "env(id=" << id << "," << background.describe();
    if (decal)
      os << ",decal=" << decal->region.x0 << ":" << decal->region.y0 << ":" << decal->region.x1
         << ":" << decal->region.y1 << ":" << (int)decal->color[0] << "." << (int)decal->color[1]
         << "." << (int)decal->color[2] << ":" << decal->disc;
    for (const SpawnSpec& s : objects)
      os << ",obj(id=" << s.prototype.id << ",shape=" << (int)s.prototype.shape << ",c="
         << (int)s.prototype.color[0] << "." << (int)s.prototype.color[1] << "."
         << (int)s.prototype.color[2] << ",hs=" << s.prototype.half_size << ",range="
         << s.range.x0 << ":" << s.range.y0 << ":" << s.range.x1 << ":" << s.range.y1 << ")";
    os << ",gspawn=" << gripper_spawn.x0 << ":" << gripper_spawn.y0 << ":" << gripper_spawn.x1
       << ":" << gripper_spawn.y1;
    os << ",skin=" << (int)skin << ",task=" << task_id << ",max_steps=" << max_steps
       << ",cam=" << camera.h << "x" << camera.w << ":" << camera.f0 << ":" << camera.k
       << ",sim=" << sim.step_gain << ":" << sim.z_grasp << ":" << sim.grasp_radius << ":"
       << sim.z_lift;
    if (occluder)
      os << ",occluder=" << occluder->x0 << ":" << occluder->y0 << ":" << occluder->x1 << ":"
         << occluder->y1;
    os << ")";
    return os.str();
  }
};

struct WorldState {
  float gx = 0.5f, gy = 0.5f, gz = 1.0f;
  Grip grip = Grip::kOpen;
  int held_object = -1;  // object id, -1 if none
  std::vector<SceneObject> objects;
  BackgroundSpec background;
  std::optional<Decal> decal;
  std::optional<Rect> occluder;
  int step_count = 0;
  int max_steps = 60;
  SimParams sim;

  bool terminal() const { return step_count >= max_steps; }

  const SceneObject* find(int id) const {
    for (const SceneObject& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  SceneObject* find(int id) {
    for (SceneObject& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
};

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// Places objects i.i.d. uniform in their spawn ranges with pairwise
// non-overlap rejection. Deterministic for (config, seed).
inline WorldState reset(const EnvConfig& config, std::uint64_t seed) {
  for (const SpawnSpec& s : config.objects) {
    if (s.range.x0 > s.range.x1 || s.range.y0 > s.range.y1)
      throw SimError("spawn range inverted for object " + std::to_string(s.prototype.id));
    if (s.range.x0 < 0 || s.range.y0 < 0 || s.range.x1 > 1 || s.range.y1 > 1)
      throw SimError("spawn range outside workspace for object " +
                     std::to_string(s.prototype.id));
  }
  Rng rng = Rng(seed).fork(0x5e7);
  WorldState st;
  st.gx = (float)rng.uniform(config.gripper_spawn.x0, config.gripper_spawn.x1);
  st.gy = (float)rng.uniform(config.gripper_spawn.y0, config.gripper_spawn.y1);
  st.gz = 1.0f;
  st.grip = Grip::kOpen;
  st.background = config.background;
  st.decal = config.decal;
  st.occluder = config.occluder;
  st.max_steps = config.max_steps;
  st.sim = config.sim;

  for (const SpawnSpec& s : config.objects) {
    SceneObject obj = s.prototype;
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      obj.x = (float)rng.uniform(s.range.x0, s.range.x1);
      obj.y = (float)rng.uniform(s.range.y0, s.range.y1);
      bool overlap = false;
      for (const SceneObject& other : st.objects) {
        const float min_dist = 1.2f * (obj.half_size + other.half_size);
        const float dx = obj.x - other.x, dy = obj.y - other.y;
        if (dx * dx + dy * dy < min_dist * min_dist) {
          overlap = true;
          break;
        }
      }
      if (!overlap) {
        placed = true;
        break;
      }
    }
    if (!placed)
      throw SimError("rejection sampling exceeded 1000 attempts; spawn ranges too tight for object " +
                     std::to_string(obj.id));
    obj.resting = true;
    st.objects.push_back(obj);
  }
  return st;
}

// One control step. Deterministic; all actions clamped on entry.
inline WorldState step(const WorldState& state, const Action& raw_action) {
  if (state.terminal()) throw SimError("step called on terminal state");
  const Action a = raw_action.clamped();
  WorldState st = state;
  const float g = st.sim.step_gain;
  st.gx = clamp01(st.gx + g * a.dx);
  st.gy = clamp01(st.gy + g * a.dy);
  st.gz = clamp01(st.gz + g * a.dz);

  const Grip prev = st.grip;
  st.grip = grip_from_command(a.gripper);

  if (prev == Grip::kOpen && st.grip == Grip::kClosed && st.held_object < 0 &&
      st.gz <= st.sim.z_grasp) {
    // attach: nearest object center within grasp_radius
    int best = -1;
    float best_d2 = st.sim.grasp_radius * st.sim.grasp_radius;
    for (const SceneObject& o : st.objects) {
      const float dx = o.x - st.gx, dy = o.y - st.gy;
      const float d2 = dx * dx + dy * dy;
      if (d2 <= best_d2) {
        best_d2 = d2;
        best = o.id;
      }
    }
    if (best >= 0) {
      st.held_object = best;
      SceneObject* o = st.find(best);
      o->resting = false;
      o->x = st.gx;
      o->y = st.gy;
    }
  } else if (prev == Grip::kClosed && st.grip == Grip::kOpen && st.held_object >= 0) {
    // release: drop in place
    SceneObject* o = st.find(st.held_object);
    o->resting = true;
    o->x = st.gx;
    o->y = st.gy;
    st.held_object = -1;
  }

  if (st.held_object >= 0) {
    SceneObject* o = st.find(st.held_object);
    o->x = st.gx;
    o->y = st.gy;
  }

  st.step_count += 1;
  return st;
}

// Pure success predicate on the current state.
inline bool success(const WorldState& state, const TaskSpec& task) {
  const SceneObject* target = state.find(task.target_id);
  if (!target)
    throw SimError("task target object " + std::to_string(task.target_id) +
                   " not present in state");
  switch (task.kind) {
    case TaskKind::kReach: {
      const float dx = target->x - state.gx, dy = target->y - state.gy;
      return state.gz <= task.z_grasp &&
             dx * dx + dy * dy <= task.reach_radius * task.reach_radius;
    }
    case TaskKind::kGrasp:
      return state.held_object == task.target_id && state.gz >= task.z_lift;
    case TaskKind::kPickPlace:
      return target->resting && task.goal_region.contains(target->x, target->y);
    case TaskKind::kStack: {
      const SceneObject* base = state.find(task.base_id);
      if (!base)
        throw SimError("stack task base object " + std::to_string(task.base_id) +
                       " not present in state");
      const float dx = target->x - base->x, dy = target->y - base->y;
      return target->resting && dx * dx + dy * dy <= task.stack_radius * task.stack_radius;
    }
    case TaskKind::kClear:
      return target->resting && !task.plate_region.contains(target->x, target->y);
  }
  throw SimError("unknown task kind");
}

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::kReach: return "reach";
    case TaskKind::kGrasp: return "grasp";
    case TaskKind::kPickPlace: return "pick_place";
    case TaskKind::kStack: return "stack";
    case TaskKind::kClear: return "clear";
  }
  return "?";
}

}  // namespace handcam
