#pragma once

#include <cmath>
#include <cstdint>

#include "handcam/image.hpp"
#include "handcam/sim.hpp"

namespace handcam {

namespace detail {

inline std::uint64_t cell_hash(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t x = (std::uint64_t)ix * 0x9e3779b97f4a7c15ULL ^
                    (std::uint64_t)iy * 0xbf58476d1ce4e5b9ULL ^ seed * 0x94d049bb133111ebULL;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline Color lerp_color(const Color& a, const Color& b, float t) {
  return Color{(std::uint8_t)std::lround(a[0] + (b[0] - a[0]) * t),
               (std::uint8_t)std::lround(a[1] + (b[1] - a[1]) * t),
               (std::uint8_t)std::lround(a[2] + (b[2] - a[2]) * t)};
}

inline Color background_at(const BackgroundSpec& bg, float wx, float wy) {
  switch (bg.kind) {
    case BackgroundSpec::Kind::kSolid:
      return bg.color_a;
    case BackgroundSpec::Kind::kChecker: {
      const auto ix = (std::int64_t)std::floor(wx / bg.cell);
      const auto iy = (std::int64_t)std::floor(wy / bg.cell);
      return ((ix + iy) & 1) ? bg.color_b : bg.color_a;
    }
    case BackgroundSpec::Kind::kStripes: {
      const auto band = (std::int64_t)std::floor((wx + wy) / bg.cell);
      return (band % 3 + 3) % 3 == 0 ? bg.color_b : bg.color_a;
    }
    case BackgroundSpec::Kind::kNoise: {
      const auto ix = (std::int64_t)std::floor(wx / bg.cell);
      const auto iy = (std::int64_t)std::floor(wy / bg.cell);
      const std::uint64_t hsh = cell_hash(ix, iy, bg.noise_seed);
      return lerp_color(bg.color_a, bg.color_b, (float)(hsh >> 40) / 16777216.0f);
    }
  }
  return bg.color_a;
}

inline void set_px(Image& img, int y, int x, const Color& c) {
  std::uint8_t* p = img.px(y, x);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

inline void fill_rect_clipped(Image& img, int y0, int y1, int x0, int x1, const Color& c,
                              int y_max) {
  y0 = std::max(y0, 0);
  y1 = std::min({y1, img.h, y_max});
  x0 = std::max(x0, 0);
  x1 = std::min(x1, img.w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set_px(img, y, x, c);
}

inline void fill_disc_clipped(Image& img, float cy, float cx, float r, const Color& c,
                              int y_max) {
  const int y0 = std::max(0, (int)std::floor(cy - r));
  const int y1 = std::min({img.h, y_max, (int)std::ceil(cy + r) + 1});
  const int x0 = std::max(0, (int)std::floor(cx - r));
  const int x1 = std::min(img.w, (int)std::ceil(cx + r) + 1);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const float dy = y + 0.5f - cy, dx = x + 0.5f - cx;
      if (dy * dy + dx * dx <= r * r) set_px(img, y, x, c);
    }
}

// Embodiment sprites. Everything here is clipped to rows [0, sprite_rows):
// the agent's own arm can only ever appear in the maskable band.
inline void draw_robot_sprite(Image& img, Grip grip, int sprite_rows) {
  const int w = img.w;
  const Color metal{95, 95, 105};
  const Color joint{70, 70, 78};
  const int base_h = std::max(2, sprite_rows / 5);
  // mount plate
  fill_rect_clipped(img, 0, base_h, w / 2 - w / 6, w / 2 + w / 6, metal, sprite_rows);
  // wrist column
  fill_rect_clipped(img, base_h, sprite_rows, w / 2 - w / 24, w / 2 + w / 24, joint,
                    sprite_rows);
  // parallel-jaw fingers
  const int spread = grip == Grip::kOpen ? w / 5 : w / 12;
  const int fw = std::max(2, w / 18);
  fill_rect_clipped(img, base_h + 1, sprite_rows, w / 2 - spread - fw, w / 2 - spread + fw,
                    metal, sprite_rows);
  fill_rect_clipped(img, base_h + 1, sprite_rows, w / 2 + spread - fw, w / 2 + spread + fw,
                    metal, sprite_rows);
}

inline void draw_human_sprite(Image& img, Grip grip, int sprite_rows) {
  const int w = img.w;
  const Color tan{205, 165, 135};
  const Color shade{175, 135, 110};
  const int base_h = std::max(2, sprite_rows / 5);
  // forearm (wider than the robot plate, different color)
  fill_rect_clipped(img, 0, base_h + 2, w / 2 - w / 5, w / 2 + w / 5, tan, sprite_rows);
  // palm
  fill_disc_clipped(img, base_h + sprite_rows * 0.35f, w / 2.0f, sprite_rows * 0.40f, tan,
                    sprite_rows);
  if (grip == Grip::kOpen) {
    // spread fingers
    const int fw = std::max(2, w / 22);
    for (int i = -2; i <= 2; ++i) {
      const int cx = w / 2 + i * (w / 9);
      fill_rect_clipped(img, sprite_rows - sprite_rows / 2, sprite_rows, cx - fw, cx + fw,
                        shade, sprite_rows);
    }
  } else {
    // fist
    fill_disc_clipped(img, sprite_rows * 0.75f, w / 2.0f, sprite_rows * 0.33f, shade,
                      sprite_rows);
  }
}

}  // namespace detail

// Deterministic rasterization of the eye-in-hand view: an orthographic window
// of width fov(z) centered on the gripper. A held object is drawn at the image
// center with its scale frozen at fov(z_grasp), so securing an object "locks"
// it in place visually while the rest of the scene keeps scaling with height.
inline Image render(const WorldState& state, Skin skin, const CameraModel& camera) {
  if (camera.h < 32 || camera.w < 32) throw SimError("camera image must be at least 32x32");
  if (camera.f0 <= 0 || camera.k <= 0) throw SimError("camera f0 and k must be positive");

  Image img(camera.h, camera.w);
  const float fov_w = camera.fov(state.gz);
  const float fov_h = fov_w * camera.h / camera.w;
  const float wx0 = state.gx - fov_w / 2;
  const float wy0 = state.gy - fov_h / 2;
  const float step_x = fov_w / camera.w;
  const float step_y = fov_h / camera.h;

  // background, decal, resting objects
  for (int y = 0; y < camera.h; ++y) {
    const float wy = wy0 + (y + 0.5f) * step_y;
    for (int x = 0; x < camera.w; ++x) {
      const float wx = wx0 + (x + 0.5f) * step_x;
      Color c = detail::background_at(state.background, wx, wy);
      if (state.decal) {
        const Decal& d = state.decal.value();
        if (d.disc) {
          const float cx = (d.region.x0 + d.region.x1) / 2, cy = (d.region.y0 + d.region.y1) / 2;
          const float rx = d.region.width() / 2, ry = d.region.height() / 2;
          const float nx = (wx - cx) / rx, ny = (wy - cy) / ry;
          if (nx * nx + ny * ny <= 1.0f) c = d.color;
        } else if (d.region.contains(wx, wy)) {
          c = d.color;
        }
      }
      for (const SceneObject& o : state.objects) {
        if (o.id == state.held_object) continue;
        if (o.shape == ObjectShape::kSquare) {
          if (std::abs(wx - o.x) <= o.half_size && std::abs(wy - o.y) <= o.half_size)
            c = o.color;
        } else {
          const float dx = wx - o.x, dy = wy - o.y;
          if (dx * dx + dy * dy <= o.half_size * o.half_size) c = o.color;
        }
      }
      detail::set_px(img, y, x, c);
    }
  }

  // held object: frozen scale, fixed position at the window center
  if (state.held_object >= 0) {
    const SceneObject* o = state.find(state.held_object);
    const float fov_g = camera.fov(state.sim.z_grasp);
    const float rx = o->half_size * camera.w / fov_g;
    const float ry = rx;  // pixel aspect is square
    const float cx = camera.w / 2.0f, cy = camera.h / 2.0f;
    const int y0 = std::max(0, (int)std::floor(cy - ry));
    const int y1 = std::min(camera.h, (int)std::ceil(cy + ry) + 1);
    const int x0 = std::max(0, (int)std::floor(cx - rx));
    const int x1 = std::min(camera.w, (int)std::ceil(cx + rx) + 1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        const float dx = (x + 0.5f - cx) / rx, dy = (y + 0.5f - cy) / ry;
        const bool inside = o->shape == ObjectShape::kSquare
                                ? (std::abs(dx) <= 1.0f && std::abs(dy) <= 1.0f)
                                : (dx * dx + dy * dy <= 1.0f);
        if (inside) detail::set_px(img, y, x, o->color);
      }
  }

  // occluder covers scene content
  if (state.occluder) {
    const Rect& r = state.occluder.value();
    const Color wall{84, 70, 58};
    for (int y = 0; y < camera.h; ++y) {
      const float wy = wy0 + (y + 0.5f) * step_y;
      if (wy < r.y0 || wy > r.y1) continue;
      for (int x = 0; x < camera.w; ++x) {
        const float wx = wx0 + (x + 0.5f) * step_x;
        if (wx >= r.x0 && wx <= r.x1) detail::set_px(img, y, x, wall);
      }
    }
  }

  // embodiment, strictly above the mask line
  const int sprite_rows = mask_rows(camera.h);
  if (skin == Skin::kRobot)
    detail::draw_robot_sprite(img, state.grip, sprite_rows);
  else
    detail::draw_human_sprite(img, state.grip, sprite_rows);

  return img;
}

}  // namespace handcam
