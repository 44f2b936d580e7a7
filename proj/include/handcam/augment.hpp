#pragma once

#include <utility>

#include "handcam/image.hpp"
#include "handcam/rng.hpp"

namespace handcam {

// Zero-pads all sides by `pad` and crops H x W at the given offset in
// [0, 2*pad]^2. Offset (pad, pad) reproduces the original image.
inline Image shift_image(const Image& img, int pad, int off_y, int off_x) {
  Image out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    const int sy = y + off_y - pad;
    if (sy < 0 || sy >= img.h) continue;  // padded region stays zero
    for (int x = 0; x < img.w; ++x) {
      const int sx = x + off_x - pad;
      if (sx < 0 || sx >= img.w) continue;
      std::memcpy(out.px(y, x), img.px(sy, sx), 3);
    }
  }
  return out;
}

// Random-shift augmentation: with probability `prob`, pad each side by `pad`
// pixels and crop at a uniform offset; otherwise identity. Draws from the rng
// in a fixed order (bernoulli, then the two offsets when augmenting).
inline Image random_shift(const Image& img, Rng& rng, int pad = 4, double prob = 0.8) {
  if (pad < 0) throw ImageError("random_shift: pad must be >= 0");
  if (pad == 0) return img;
  if (!rng.bernoulli(prob)) return img;
  const int off_y = (int)rng.uniform_int((std::uint64_t)(2 * pad + 1));
  const int off_x = (int)rng.uniform_int((std::uint64_t)(2 * pad + 1));
  return shift_image(img, pad, off_y, off_x);
}

// Paired variant: one offset draw is shared by both frames so the shift does
// not perturb the dynamics between them.
inline std::pair<Image, Image> random_shift_pair(const Image& a, const Image& b, Rng& rng,
                                                 int pad = 4, double prob = 0.8) {
  if (pad < 0) throw ImageError("random_shift: pad must be >= 0");
  if (pad == 0 || !rng.bernoulli(prob)) return {a, b};
  const int off_y = (int)rng.uniform_int((std::uint64_t)(2 * pad + 1));
  const int off_x = (int)rng.uniform_int((std::uint64_t)(2 * pad + 1));
  return {shift_image(a, pad, off_y, off_x), shift_image(b, pad, off_y, off_x)};
}

}  // namespace handcam
