#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "handcam/tensor.hpp"

namespace handcam {

// Checkpoint container: magic "HCK1", version u32, count u32, then per tensor:
// name (u32 length + UTF-8), rank u32, dims u32 x rank, data little-endian f32.
// Round-trips are bit-exact.

constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
         ((std::uint32_t)b[3] << 24);
}

inline void put_f32_array(std::ostream& os, const float* data, std::size_t n) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts can write the buffer directly.
  os.write(reinterpret_cast<const char*>(data), (std::streamsize)(n * 4));
}

inline void get_f32_array(std::istream& is, float* data, std::size_t n) {
  if (!is.read(reinterpret_cast<char*>(data), (std::streamsize)(n * 4)))
    throw CheckpointError("truncated checkpoint while reading tensor data");
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open for writing: " + path);
  os.write("HCK1", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, (std::uint32_t)tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, (std::uint32_t)name.size());
    os.write(name.data(), (std::streamsize)name.size());
    detail::put_u32(os, (std::uint32_t)t.shape().size());
    for (int d : t.shape()) detail::put_u32(os, (std::uint32_t)d);
    detail::put_f32_array(os, t.data(), t.numel());
  }
  if (!os) throw CheckpointError("write failed: " + path);
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HCK1", 4) != 0)
    throw CheckpointError("bad magic bytes in " + path + " (expected HCK1)");
  const std::uint32_t version = detail::get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = detail::get_u32(is, "tensor count");
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = detail::get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw CheckpointError("truncated tensor name");
    const std::uint32_t rank = detail::get_u32(is, "rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape[r] = (int)detail::get_u32(is, "dim");
      if (shape[r] <= 0) throw CheckpointError("non-positive dim in checkpoint");
      numel *= (std::size_t)shape[r];
    }
    Tensor t(shape);
    detail::get_f32_array(is, t.data(), numel);
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

inline std::map<std::string, Tensor> checkpoint_map(const std::string& path) {
  std::map<std::string, Tensor> m;
  for (auto& [name, t] : load_checkpoint(path)) m.emplace(name, t);
  return m;
}

}  // namespace handcam
