#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "handcam/tensor.hpp"

namespace handcam {

class ImageError : public std::runtime_error {
 public:
  explicit ImageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Interleaved RGB byte image, row-major, origin at the top-left.
struct Image {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;  // h*w*3

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), data((std::size_t)h_ * w_ * 3, 0) {}

  std::uint8_t* px(int y, int x) { return data.data() + ((std::size_t)y * w + x) * 3; }
  const std::uint8_t* px(int y, int x) const {
    return data.data() + ((std::size_t)y * w + x) * 3;
  }

  bool operator==(const Image& other) const {
    return h == other.h && w == other.w && data == other.data;
  }
};

// Number of masked rows for a given height: round(fraction * H).
inline int mask_rows(int h, double fraction = 0.36) {
  return (int)std::lround(fraction * h);
}

// Zeroes rows [0, round(fraction*H)) in all channels. Idempotent.
inline Image mask_image(const Image& img, double fraction = 0.36) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ImageError("mask fraction must be in (0,1), got " + std::to_string(fraction));
  const int rows = mask_rows(img.h, fraction);
  if (rows >= img.h)
    throw ImageError("mask would cover the whole image (rows=" + std::to_string(rows) +
                     ", H=" + std::to_string(img.h) + ")");
  Image out = img;
  std::memset(out.data.data(), 0, (std::size_t)rows * img.w * 3);
  return out;
}

inline bool mask_region_is_zero(const Image& img, double fraction = 0.36) {
  const int rows = mask_rows(img.h, fraction);
  for (std::size_t i = 0; i < (std::size_t)rows * img.w * 3; ++i)
    if (img.data[i] != 0) return false;
  return true;
}

// Bytes -> float tensor [3,H,W], p/255 - 0.5 (range [-0.5, 0.5]), channel-first.
inline Tensor normalize(const Image& img) {
  Tensor t({3, img.h, img.w});
  float* d = t.data();
  const std::size_t plane = (std::size_t)img.h * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const std::uint8_t* p = img.px(y, x);
      const std::size_t off = (std::size_t)y * img.w + x;
      d[off] = p[0] / 255.0f - 0.5f;
      d[plane + off] = p[1] / 255.0f - 0.5f;
      d[2 * plane + off] = p[2] / 255.0f - 0.5f;
    }
  return t;
}

// Exact inverse of normalize().
inline Image denormalize(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw ImageError("denormalize expects [3,H,W], got " + shape_str(t.shape()));
  Image img(t.dim(1), t.dim(2));
  const float* d = t.data();
  const std::size_t plane = (std::size_t)img.h * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const std::size_t off = (std::size_t)y * img.w + x;
      std::uint8_t* p = img.px(y, x);
      for (int c = 0; c < 3; ++c)
        p[c] = (std::uint8_t)std::lround((d[c * plane + off] + 0.5f) * 255.0f);
    }
  return img;
}

// Raw image dump: magic "HCIM", then H, W, C as u32 little-endian, then bytes.
inline void write_image(const std::string& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ImageError("cannot open for writing: " + path);
  os.write("HCIM", 4);
  const std::uint32_t dims[3] = {(std::uint32_t)img.h, (std::uint32_t)img.w, 3u};
  for (std::uint32_t v : dims) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  os.write(reinterpret_cast<const char*>(img.data.data()), (std::streamsize)img.data.size());
  if (!os) throw ImageError("write failed: " + path);
}

inline Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ImageError("cannot open image: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HCIM", 4) != 0)
    throw ImageError("bad magic bytes in " + path + " (expected HCIM)");
  std::uint32_t dims[3];
  for (auto& v : dims) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ImageError("truncated header: " + path);
    v = (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
        ((std::uint32_t)b[3] << 24);
  }
  if (dims[2] != 3) throw ImageError("expected 3 channels in " + path);
  Image img((int)dims[0], (int)dims[1]);
  if (!is.read(reinterpret_cast<char*>(img.data.data()), (std::streamsize)img.data.size()))
    throw ImageError("truncated pixel data: " + path);
  return img;
}

}  // namespace handcam
