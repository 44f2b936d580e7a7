#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "handcam/episode.hpp"
#include "handcam/hash.hpp"
#include "handcam/image.hpp"
#include "handcam/render.hpp"
#include "handcam/rng.hpp"
#include "handcam/sim.hpp"

namespace handcam {

// ---------------------------------------------------------------------------
// scripted play policy
// ---------------------------------------------------------------------------

// Behavior mix for task-agnostic play: waving the end-effector around,
// reaching toward objects, grasping and lifting them, carrying, dropping.
struct PlayPolicyConfig {
  double wave_weight = 1.0;
  double hover_weight = 0.25;
  double reach_weight = 1.6;      // reach -> grasp -> lift -> carry -> drop chain
  double empty_close_prob = 0.03; // occasional close with nothing underneath
  float move_noise = 0.25;        // uniform action jitter
};

class PlayPolicy {
 public:
  explicit PlayPolicy(PlayPolicyConfig cfg = {}) : cfg_(cfg) {}

  Action act(const WorldState& state, Rng& rng) {
    switch (phase_) {
      case Phase::kChoose: {
        choose(state, rng);
        return act(state, rng);
      }
      case Phase::kWave: {
        if (--ttl_ <= 0 || near_xy(state, 0.02f)) phase_ = Phase::kChoose;
        return move_toward(state, rng, /*grip=*/held(state) ? -1.0f : 1.0f);
      }
      case Phase::kHover: {
        if (--ttl_ <= 0) phase_ = Phase::kChoose;
        Action a = jitter_only(rng);
        a.gripper = held(state) ? -1.0f : 1.0f;
        return a;
      }
      case Phase::kReach: {
        const SceneObject* obj = state.find(target_object_);
        if (!obj || !obj->resting) {
          phase_ = Phase::kChoose;
          return act(state, rng);
        }
        tx_ = obj->x;
        ty_ = obj->y;
        tz_ = state.sim.z_grasp * 0.5f;
        if (near_xy(state, state.sim.grasp_radius * 0.4f) &&
            state.gz <= state.sim.z_grasp) {
          phase_ = Phase::kClose;
          return act(state, rng);
        }
        if (--ttl_ <= 0) phase_ = Phase::kChoose;
        // descend only once roughly above the object
        Action a = move_toward(state, rng, 1.0f);
        if (!near_xy(state, 0.08f)) a.dz = std::max(a.dz, -0.2f);
        return a;
      }
      case Phase::kClose: {
        phase_ = Phase::kAfterClose;
        return Action{0, 0, 0, -1.0f};
      }
      case Phase::kAfterClose: {
        if (held(state)) {
          phase_ = Phase::kLift;
          tz_ = (float)rng.uniform(state.sim.z_lift, 1.0);
        } else {
          // missed; let go and re-decide
          phase_ = Phase::kChoose;
          return Action{0, 0, 0, 1.0f};
        }
        return act(state, rng);
      }
      case Phase::kLift: {
        if (state.gz >= tz_ - 0.01f) {
          phase_ = Phase::kCarry;
          ttl_ = 4 + (int)rng.uniform_int(18);
          tx_ = (float)rng.uniform(0.1, 0.9);
          ty_ = (float)rng.uniform(0.1, 0.9);
        }
        Action a = jitter_only(rng);
        a.dz = 1.0f;
        a.gripper = -1.0f;
        return a;
      }
      case Phase::kCarry: {
        if (--ttl_ <= 0 || near_xy(state, 0.03f)) {
          phase_ = Phase::kDrop;
          return act(state, rng);
        }
        return move_toward(state, rng, -1.0f);
      }
      case Phase::kDrop: {
        phase_ = Phase::kChoose;
        return Action{0, 0, 0, 1.0f};
      }
    }
    return Action{};
  }

 private:
  enum class Phase { kChoose, kWave, kHover, kReach, kClose, kAfterClose, kLift, kCarry, kDrop };

  bool held(const WorldState& s) const { return s.held_object >= 0; }

  bool near_xy(const WorldState& s, float tol) const {
    const float dx = tx_ - s.gx, dy = ty_ - s.gy;
    return dx * dx + dy * dy <= tol * tol;
  }

  Action jitter_only(Rng& rng) const {
    const float j = cfg_.move_noise;
    return Action{(float)rng.uniform(-j, j), (float)rng.uniform(-j, j),
                  (float)rng.uniform(-j, j) * 0.5f, 1.0f};
  }

  Action move_toward(const WorldState& s, Rng& rng, float grip) const {
    const float g = s.sim.step_gain;
    const float j = cfg_.move_noise;
    auto cl = [](float v) { return std::clamp(v, -1.0f, 1.0f); };
    return Action{cl((tx_ - s.gx) / g + (float)rng.uniform(-j, j)),
                  cl((ty_ - s.gy) / g + (float)rng.uniform(-j, j)),
                  cl((tz_ - s.gz) / g + (float)rng.uniform(-j, j)), grip};
  }

  void choose(const WorldState& state, Rng& rng) {
    if (held(state)) {  // shouldn't normally happen mid-chain; just drop
      phase_ = Phase::kDrop;
      return;
    }
    if (!state.objects.empty() && rng.bernoulli(cfg_.empty_close_prob)) {
      phase_ = Phase::kClose;
      return;
    }
    const double total = cfg_.wave_weight + cfg_.hover_weight +
                         (state.objects.empty() ? 0.0 : cfg_.reach_weight);
    double pick = rng.uniform() * total;
    if ((pick -= cfg_.wave_weight) < 0) {
      phase_ = Phase::kWave;
      ttl_ = 6 + (int)rng.uniform_int(24);
      tx_ = (float)rng.uniform(0.05, 0.95);
      ty_ = (float)rng.uniform(0.05, 0.95);
      tz_ = (float)rng.uniform(0.05, 1.0);
      return;
    }
    if ((pick -= cfg_.hover_weight) < 0) {
      phase_ = Phase::kHover;
      ttl_ = 3 + (int)rng.uniform_int(8);
      return;
    }
    phase_ = Phase::kReach;
    ttl_ = 80;
    target_object_ = state.objects[rng.uniform_int(state.objects.size())].id;
  }

  PlayPolicyConfig cfg_;
  Phase phase_ = Phase::kChoose;
  int ttl_ = 0;
  int target_object_ = 0;
  float tx_ = 0.5f, ty_ = 0.5f, tz_ = 0.5f;
};

// ---------------------------------------------------------------------------
// collection loops
// ---------------------------------------------------------------------------

namespace detail {

inline Episode start_episode(const EnvConfig& cfg, std::uint64_t seed, const char* collector) {
  Episode ep;
  ep.metadata["config"] = hex64(fnv1a64(cfg.describe()));
  ep.metadata["config_id"] = cfg.id;
  ep.metadata["seed"] = std::to_string(seed);
  ep.metadata["skin"] = cfg.skin == Skin::kRobot ? "robot" : "human";
  ep.metadata["task"] = cfg.task_id;
  ep.metadata["collector"] = collector;
  return ep;
}

inline void record(Episode& ep, const WorldState& state, const EnvConfig& cfg,
                   const Action& action, std::int8_t grasp_state, bool terminal) {
  Transition t;
  t.image = render(state, cfg.skin, cfg.camera);
  t.action = {action.dx, action.dy, action.dz, action.gripper};
  t.grasp_state = grasp_state;
  t.terminal = terminal;
  ep.transitions.push_back(std::move(t));
}

}  // namespace detail

// Runs the play policy for `steps` control steps and returns the resulting
// episode (steps+1 frames; the final frame carries a placeholder action).
inline Episode collect_play_episode(const EnvConfig& cfg, int steps, std::uint64_t seed,
                                    const PlayPolicyConfig& pcfg = {}) {
  if (steps + 1 > cfg.max_steps)
    throw SimError("play episode length exceeds max_steps");
  Rng rng = Rng(seed).fork(0x91a7);
  WorldState st = reset(cfg, seed);
  PlayPolicy policy(pcfg);
  Episode ep = detail::start_episode(cfg, seed, "play");
  std::int8_t grasp = 1;
  for (int i = 0; i < steps; ++i) {
    const Action a = policy.act(st, rng).clamped();
    detail::record(ep, st, cfg, a, grasp, false);
    st = step(st, a);
    grasp = a.gripper >= 0 ? 1 : -1;
  }
  detail::record(ep, st, cfg, Action{0, 0, 0, (float)grasp}, grasp, true);
  return ep;
}

// ---------------------------------------------------------------------------
// scripted expert
// ---------------------------------------------------------------------------

struct ExpertParams {
  float jitter = 0.15f;     // uniform noise on move commands
  float transport_z = 0.60f;
};

class ExpertController {
 public:
  ExpertController(const TaskSpec& task, ExpertParams params) : task_(task), p_(params) {}

  Action act(const WorldState& state, Rng& rng) {
    const SceneObject* target = state.find(task_.target_id);
    if (!target) throw SimError("expert: target object missing");
    const float g = state.sim.step_gain;
    auto cl = [](float v) { return std::clamp(v, -1.0f, 1.0f); };
    auto toward = [&](float tx, float ty, float tz) {
      return Action{cl((tx - state.gx) / g + noise(rng)), cl((ty - state.gy) / g + noise(rng)),
                    cl((tz - state.gz) / g + noise(rng)), 1.0f};
    };

    if (task_.kind == TaskKind::kReach) {
      if (!above(state, target->x, target->y, task_.reach_radius * 0.4f))
        return hover_to(state, rng, target->x, target->y);
      return toward(target->x, target->y, task_.z_grasp * 0.5f);
    }

    // grasp-family tasks
    if (state.held_object != task_.target_id) {
      if (state.held_object >= 0) return Action{0, 0, 0, 1.0f};  // wrong object: release
      if (!above(state, target->x, target->y, state.sim.grasp_radius * 0.35f))
        return hover_to(state, rng, target->x, target->y);
      if (state.gz > state.sim.z_grasp * 0.9f)
        return toward(target->x, target->y, state.sim.z_grasp * 0.5f);
      return Action{0, 0, 0, -1.0f};  // close
    }

    // holding the target
    if (task_.kind == TaskKind::kGrasp) {
      Action a = Action{noise(rng), noise(rng), 1.0f, -1.0f};
      return a;
    }
    if (state.gz < p_.transport_z - 0.02f && !transported_) {
      Action a = Action{noise(rng), noise(rng), 1.0f, -1.0f};
      return a;
    }
    const auto [dx_, dy_] = drop_point(state);
    const float dx = dx_, dy = dy_;
    if (std::hypot(dx - state.gx, dy - state.gy) > drop_tolerance()) {
      Action a = toward(dx, dy, p_.transport_z);
      a.gripper = -1.0f;
      return a;
    }
    transported_ = true;
    return Action{0, 0, 0, 1.0f};  // release
  }

 private:
  float noise(Rng& rng) const { return (float)rng.uniform(-p_.jitter, p_.jitter); }

  bool above(const WorldState& s, float x, float y, float tol) const {
    const float dx = x - s.gx, dy = y - s.gy;
    return dx * dx + dy * dy <= tol * tol;
  }

  // approach at travel height, descend only over the target
  Action hover_to(const WorldState& s, Rng& rng, float x, float y) const {
    const float g = s.sim.step_gain;
    auto cl = [](float v) { return std::clamp(v, -1.0f, 1.0f); };
    Action a{cl((x - s.gx) / g + noise(rng)), cl((y - s.gy) / g + noise(rng)), 0, 1.0f};
    const float travel = std::max(s.sim.z_grasp * 4.0f, 0.35f);
    a.dz = cl((travel - s.gz) / g + noise(rng));
    return a;
  }

  std::pair<float, float> drop_point(const WorldState& s) const {
    switch (task_.kind) {
      case TaskKind::kPickPlace:
        return {(task_.goal_region.x0 + task_.goal_region.x1) / 2,
                (task_.goal_region.y0 + task_.goal_region.y1) / 2};
      case TaskKind::kStack: {
        const SceneObject* base = s.find(task_.base_id);
        if (!base) throw SimError("expert: stack base missing");
        return {base->x, base->y};
      }
      case TaskKind::kClear: {
        const Rect& r = task_.plate_region;
        float x = r.x1 + 0.14f;
        if (x > 0.92f) x = std::max(0.08f, r.x0 - 0.14f);
        return {x, (r.y0 + r.y1) / 2};
      }
      default:
        return {s.gx, s.gy};
    }
  }

  float drop_tolerance() const {
    switch (task_.kind) {
      case TaskKind::kStack: return task_.stack_radius * 0.4f;
      case TaskKind::kPickPlace:
        return 0.35f * std::min(task_.goal_region.width(), task_.goal_region.height());
      default: return 0.03f;
    }
  }

  TaskSpec task_;
  ExpertParams p_;
  bool transported_ = false;
};

// Collects one expert demonstration; the episode ends on task success. In
// partial mode only the post-grasp suffix is kept (it starts with grasp_state
// closed). Throws if the controller cannot solve the instance in max_steps.
inline Episode scripted_expert(const EnvConfig& cfg, const TaskSpec& task, std::uint64_t seed,
                               const ExpertParams& params = {}, bool partial = false) {
  Rng rng = Rng(seed).fork(0xe59);
  WorldState st = reset(cfg, seed);
  ExpertController ctrl(task, params);
  Episode ep = detail::start_episode(cfg, seed, "expert");
  ep.metadata["partial"] = partial ? "1" : "0";
  std::int8_t grasp = 1;
  bool solved = false;
  while (st.step_count < cfg.max_steps - 1) {
    const Action a = ctrl.act(st, rng).clamped();
    detail::record(ep, st, cfg, a, grasp, false);
    st = step(st, a);
    grasp = a.gripper >= 0 ? 1 : -1;
    if (success(st, task)) {
      solved = true;
      break;
    }
  }
  if (!solved)
    throw SimError("scripted expert failed to reach success within max_steps on config " +
                   cfg.id + " seed " + std::to_string(seed) +
                   "; thresholds are likely mis-tuned");
  detail::record(ep, st, cfg, Action{0, 0, 0, (float)grasp}, grasp, true);

  if (partial) {
    std::size_t first = 0;
    while (first < ep.transitions.size() && ep.transitions[first].grasp_state != -1) ++first;
    if (first >= ep.transitions.size() - 1)
      throw SimError("partial expert episode has no post-grasp suffix");
    Episode suffix;
    suffix.metadata = ep.metadata;
    suffix.transitions.assign(ep.transitions.begin() + (std::ptrdiff_t)first,
                              ep.transitions.end());
    return suffix;
  }
  return ep;
}

}  // namespace handcam
