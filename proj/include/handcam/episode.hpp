#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "handcam/image.hpp"
#include "handcam/sim.hpp"

namespace handcam {

class EpisodeError : public std::runtime_error {
 public:
  explicit EpisodeError(const std::string& msg) : std::runtime_error(msg) {}
};

// One (observation, action, grasp state) sample. grasp_state is the commanded
// gripper binary of the previous step (+1 open at episode start).
struct Transition {
  Image image;
  std::array<float, 4> action{0, 0, 0, 1};
  std::int8_t grasp_state = 1;  // -1 closed, +1 open
  bool terminal = false;
};

struct Episode {
  std::vector<Transition> transitions;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return transitions.size(); }
};

constexpr std::uint32_t kEpisodeFileVersion = 1;

namespace detail {

inline void ep_put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t ep_get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw EpisodeError(std::string("truncated episode file while reading ") + what);
  return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
         ((std::uint32_t)b[3] << 24);
}

inline void ep_put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  ep_put_u32(os, v);
}

inline float ep_get_f32(std::istream& is, const char* what) {
  const std::uint32_t v = ep_get_u32(is, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

// Metadata block: length-prefixed UTF-8, JSON-style {"k":"v",...} with keys sorted.
inline std::string encode_metadata(const std::map<std::string, std::string>& md) {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto& [k, v] : md) {
    if (!first) os << ",";
    first = false;
    os << "\"" << k << "\":\"" << v << "\"";
  }
  os << "}";
  return os.str();
}

inline std::map<std::string, std::string> decode_metadata(const std::string& s) {
  std::map<std::string, std::string> md;
  std::size_t i = 0;
  auto fail = [&](const char* why) {
    throw EpisodeError(std::string("malformed episode metadata: ") + why);
  };
  if (s.empty() || s.front() != '{' || s.back() != '}') fail("not an object");
  i = 1;
  while (i < s.size() - 1) {
    if (s[i] == ',') { ++i; continue; }
    if (s[i] != '"') fail("expected key quote");
    const std::size_t ke = s.find('"', i + 1);
    if (ke == std::string::npos) fail("unterminated key");
    const std::string key = s.substr(i + 1, ke - i - 1);
    if (ke + 1 >= s.size() || s[ke + 1] != ':' || s[ke + 2] != '"') fail("expected value");
    const std::size_t ve = s.find('"', ke + 3);
    if (ve == std::string::npos) fail("unterminated value");
    md[key] = s.substr(ke + 3, ve - ke - 3);
    i = ve + 1;
  }
  return md;
}

}  // namespace detail

// Episode file: magic "HCEP", version u32, header (H, W, C, action_dim u32),
// episode count u32; per episode: metadata block (length-prefixed UTF-8
// JSON-style key/values), transition count u32, then packed transitions
// (image bytes, 4 f32 little-endian, grasp i8, terminal u8).
inline void write_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  int h = 0, w = 0;
  for (const Episode& ep : episodes) {
    if (ep.transitions.empty()) throw EpisodeError("episode with no transitions");
    for (std::size_t i = 0; i < ep.transitions.size(); ++i) {
      const Transition& t = ep.transitions[i];
      const bool last = i + 1 == ep.transitions.size();
      if (t.terminal != last)
        throw EpisodeError("episode must have exactly one terminal transition, at the end");
      if (h == 0) { h = t.image.h; w = t.image.w; }
      if (t.image.h != h || t.image.w != w)
        throw EpisodeError("all episode images must share one size");
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw EpisodeError("cannot open for writing: " + path);
  os.write("HCEP", 4);
  detail::ep_put_u32(os, kEpisodeFileVersion);
  detail::ep_put_u32(os, (std::uint32_t)h);
  detail::ep_put_u32(os, (std::uint32_t)w);
  detail::ep_put_u32(os, 3u);
  detail::ep_put_u32(os, 4u);  // action_dim
  detail::ep_put_u32(os, (std::uint32_t)episodes.size());
  for (const Episode& ep : episodes) {
    const std::string md = detail::encode_metadata(ep.metadata);
    detail::ep_put_u32(os, (std::uint32_t)md.size());
    os.write(md.data(), (std::streamsize)md.size());
    detail::ep_put_u32(os, (std::uint32_t)ep.transitions.size());
    for (const Transition& t : ep.transitions) {
      os.write(reinterpret_cast<const char*>(t.image.data.data()),
               (std::streamsize)t.image.data.size());
      for (float a : t.action) detail::ep_put_f32(os, a);
      os.put((char)t.grasp_state);
      os.put((char)(t.terminal ? 1 : 0));
    }
  }
  if (!os) throw EpisodeError("write failed: " + path);
}

inline std::vector<Episode> read_episodes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw EpisodeError("cannot open episode file: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HCEP", 4) != 0)
    throw EpisodeError("bad magic bytes in " + path + " (expected HCEP)");
  const std::uint32_t version = detail::ep_get_u32(is, "version");
  if (version != kEpisodeFileVersion)
    throw EpisodeError("unsupported episode file version " + std::to_string(version));
  const int h = (int)detail::ep_get_u32(is, "height");
  const int w = (int)detail::ep_get_u32(is, "width");
  const std::uint32_t c = detail::ep_get_u32(is, "channels");
  const std::uint32_t adim = detail::ep_get_u32(is, "action dim");
  if (c != 3 || adim != 4)
    throw EpisodeError("unsupported episode layout (C=" + std::to_string(c) +
                       ", action_dim=" + std::to_string(adim) + ")");
  const std::uint32_t count = detail::ep_get_u32(is, "episode count");
  if (count > 0 && (h <= 0 || w <= 0 || h > 1 << 14 || w > 1 << 14))
    throw EpisodeError("implausible image size in header");
  std::vector<Episode> episodes;
  episodes.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    Episode ep;
    const std::uint32_t md_len = detail::ep_get_u32(is, "metadata length");
    if (md_len > 1 << 20) throw EpisodeError("implausible metadata length");
    std::string md(md_len, '\0');
    if (!is.read(md.data(), md_len)) throw EpisodeError("truncated metadata");
    ep.metadata = detail::decode_metadata(md);
    const std::uint32_t n = detail::ep_get_u32(is, "transition count");
    if (n == 0) throw EpisodeError("episode with zero transitions");
    ep.transitions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      Transition t;
      t.image = Image(h, w);
      if (!is.read(reinterpret_cast<char*>(t.image.data.data()),
                   (std::streamsize)t.image.data.size()))
        throw EpisodeError("truncated image data in episode " + std::to_string(e));
      for (float& a : t.action) a = detail::ep_get_f32(is, "action");
      int ch = is.get();
      if (ch == EOF) throw EpisodeError("truncated grasp state");
      t.grasp_state = (std::int8_t)(signed char)ch;
      if (t.grasp_state != 1 && t.grasp_state != -1)
        throw EpisodeError("grasp state must be -1 or +1");
      ch = is.get();
      if (ch == EOF) throw EpisodeError("truncated terminal flag");
      t.terminal = ch != 0;
      ep.transitions.push_back(std::move(t));
    }
    if (!ep.transitions.back().terminal)
      throw EpisodeError("episode must end with a terminal transition");
    for (std::size_t i = 0; i + 1 < ep.transitions.size(); ++i)
      if (ep.transitions[i].terminal)
        throw EpisodeError("terminal transition before the end of an episode");
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

inline void check_masked_episode(const Episode& ep, float fraction, const char* what) {
  for (const Transition& t : ep.transitions)
    if (!mask_region_is_zero(t.image, fraction))
      throw EpisodeError(std::string(what) +
                         ": found nonzero pixels in the mask region; images must be "
                         "pre-masked for a masked-input model");
}

inline void check_masked_dataset(const std::vector<Episode>& eps, float fraction,
                                 const char* what) {
  for (const Episode& ep : eps) check_masked_episode(ep, fraction, what);
}

// Paths plus transition accounting for a set of episode files.
struct DatasetIndex {
  std::vector<std::string> paths;
  std::size_t episode_count = 0;
  std::size_t transition_count = 0;

  static DatasetIndex from_files(const std::vector<std::string>& paths) {
    DatasetIndex idx;
    idx.paths = paths;
    for (const std::string& p : paths) {
      const auto eps = read_episodes(p);
      idx.episode_count += eps.size();
      for (const Episode& e : eps) idx.transition_count += e.size();
    }
    return idx;
  }
};

inline std::vector<Episode> load_dataset(const DatasetIndex& idx) {
  std::vector<Episode> all;
  for (const std::string& p : idx.paths) {
    auto eps = read_episodes(p);
    for (Episode& e : eps) all.push_back(std::move(e));
  }
  return all;
}

}  // namespace handcam
