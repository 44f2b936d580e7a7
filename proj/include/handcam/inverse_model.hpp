#pragma once

#include <array>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "handcam/augment.hpp"
#include "handcam/checkpoint.hpp"
#include "handcam/episode.hpp"
#include "handcam/hash.hpp"
#include "handcam/image.hpp"
#include "handcam/nn.hpp"
#include "handcam/optim.hpp"
#include "handcam/ops.hpp"
#include "handcam/rng.hpp"

namespace handcam {

struct InverseModelConfig {
  int image_hw = 64;
  int in_channels = 6;  // two frames fused channel-wise
  int conv_filters = 32;
  int kernel = 3;
  std::array<int, 4> strides{2, 1, 1, 1};
  int padding = 0;
  int ff_latent = 128;  // width of both feedforward layers
  int out_dim = 4;
  bool masked_input = true;
  float mask_fraction = 0.36f;

  static InverseModelConfig desk() { return InverseModelConfig{}; }

  static InverseModelConfig paper() {
    InverseModelConfig cfg;
    cfg.image_hw = 100;
    cfg.conv_filters = 128;
    cfg.ff_latent = 200;
    return cfg;
  }

  std::vector<int> spatial_sizes() const {
    std::vector<int> sizes;
    int s = image_hw;
    for (int stride : strides) {
      s = conv_output_dim(s, kernel, stride, padding);
      if (s <= 0) throw TensorError("conv stack collapses the image; incompatible size");
      sizes.push_back(s);
    }
    return sizes;
  }

  int flatten_dim() const {
    const int last = spatial_sizes().back();
    return conv_filters * last * last;
  }
};

class InverseModel {
 public:
  InverseModel(const InverseModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng(seed).fork(0x1d);
    (void)cfg_.flatten_dim();  // validates geometry at build time
    conv_[0] = Conv2dLayer(ps_, "conv1", cfg.in_channels, cfg.conv_filters, cfg.kernel,
                           cfg.strides[0], cfg.padding, rng);
    bn_[0] = BatchNormLayer(ps_, "bn1", cfg.conv_filters);
    for (int i = 1; i < 4; ++i) {
      conv_[i] = Conv2dLayer(ps_, "conv" + std::to_string(i + 1), cfg.conv_filters,
                             cfg.conv_filters, cfg.kernel, cfg.strides[i], cfg.padding, rng);
      bn_[i] = BatchNormLayer(ps_, "bn" + std::to_string(i + 1), cfg.conv_filters);
    }
    ff1_ = LinearLayer(ps_, "ff1", cfg_.flatten_dim(), cfg.ff_latent, rng);
    ff_bn1_ = BatchNormLayer(ps_, "ff_bn1", cfg.ff_latent);
    ff2_ = LinearLayer(ps_, "ff2", cfg.ff_latent, cfg.ff_latent, rng);
    ff_bn2_ = BatchNormLayer(ps_, "ff_bn2", cfg.ff_latent);
    out_ = LinearLayer(ps_, "out", cfg.ff_latent, cfg.out_dim, rng);
  }

  // pair_batch: [N, 6, H, W] (frames t and t+1 concatenated channel-wise).
  Tensor forward(Tape* tape, const Tensor& pair_batch, BnMode mode) const {
    Tensor h = pair_batch;
    for (int i = 0; i < 4; ++i) {
      h = conv_[i].forward(tape, h);
      h = bn_[i].forward(tape, h, mode);
      h = relu(tape, h);
    }
    h = flatten(tape, h);
    h = relu(tape, ff_bn1_.forward(tape, ff1_.forward(tape, h), mode));
    h = relu(tape, ff_bn2_.forward(tape, ff2_.forward(tape, h), mode));
    return out_.forward(tape, h);
  }

  const InverseModelConfig& config() const { return cfg_; }
  ParamSet& params() { return ps_; }
  const ParamSet& params() const { return ps_; }

  const std::set<std::uint64_t>& train_episode_ids() const { return train_ids_; }
  void set_train_episode_ids(std::set<std::uint64_t> ids) { train_ids_ = std::move(ids); }

  void save(const std::string& path) const {
    auto tensors = ps_.all_tensors();
    auto meta = [&](const std::string& name, float v) {
      tensors.emplace_back("meta." + name, Tensor::scalar(v));
    };
    meta("image_hw", (float)cfg_.image_hw);
    meta("in_channels", (float)cfg_.in_channels);
    meta("conv_filters", (float)cfg_.conv_filters);
    meta("ff_latent", (float)cfg_.ff_latent);
    meta("out_dim", (float)cfg_.out_dim);
    meta("masked_input", cfg_.masked_input ? 1.0f : 0.0f);
    meta("mask_fraction", cfg_.mask_fraction);
    if (!train_ids_.empty()) {
      Tensor ids({(int)train_ids_.size(), 2});
      std::size_t i = 0;
      for (std::uint64_t id : train_ids_) {
        const std::uint32_t lo = (std::uint32_t)(id & 0xffffffffu);
        const std::uint32_t hi = (std::uint32_t)(id >> 32);
        std::memcpy(ids.data() + 2 * i, &lo, 4);
        std::memcpy(ids.data() + 2 * i + 1, &hi, 4);
        ++i;
      }
      tensors.emplace_back("meta.train_id_bits", ids);
    }
    save_checkpoint(path, tensors);
  }

  static InverseModel load(const std::string& path, std::uint64_t seed = 0) {
    auto m = checkpoint_map(path);
    auto meta = [&](const std::string& name) {
      auto it = m.find("meta." + name);
      if (it == m.end()) throw CheckpointError("checkpoint missing meta." + name);
      return it->second.item();
    };
    InverseModelConfig cfg;
    cfg.image_hw = (int)meta("image_hw");
    cfg.in_channels = (int)meta("in_channels");
    cfg.conv_filters = (int)meta("conv_filters");
    cfg.ff_latent = (int)meta("ff_latent");
    cfg.out_dim = (int)meta("out_dim");
    cfg.masked_input = meta("masked_input") != 0.0f;
    cfg.mask_fraction = meta("mask_fraction");
    InverseModel model(cfg, seed);
    load_into(model.ps_, m);
    if (auto it = m.find("meta.train_id_bits"); it != m.end()) {
      std::set<std::uint64_t> ids;
      const Tensor& t = it->second;
      for (int i = 0; i < t.dim(0); ++i) {
        std::uint32_t lo, hi;
        std::memcpy(&lo, t.data() + 2 * i, 4);
        std::memcpy(&hi, t.data() + 2 * i + 1, 4);
        ids.insert(((std::uint64_t)hi << 32) | lo);
      }
      model.train_ids_ = std::move(ids);
    }
    return model;
  }

 private:
  InverseModelConfig cfg_;
  ParamSet ps_;
  std::set<std::uint64_t> train_ids_;
  std::array<Conv2dLayer, 4> conv_;
  std::array<BatchNormLayer, 4> bn_;
  LinearLayer ff1_, ff2_, out_;
  BatchNormLayer ff_bn1_, ff_bn2_;
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct InverseTrainConfig {
  int epochs = 12;
  int batch = 64;
  AdamConfig adam{.lr = 1e-3f};
  int shift_pad = 4;
  double shift_prob = 0.8;
  double holdout_frac = 0.1;
};

struct InverseTrainReport {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> holdout_loss;  // per epoch
};

inline std::uint64_t episode_uid(const Episode& ep) {
  std::string key;
  for (const char* k : {"config", "config_id", "seed", "collector", "partial"}) {
    auto it = ep.metadata.find(k);
    if (it != ep.metadata.end()) key += it->second;
    key += '|';
  }
  key += std::to_string(ep.size());
  return fnv1a64(key);
}

namespace detail {

struct PairRef {
  int episode;
  int t;
};

inline void fill_pair_input(Tensor& batch, int row, const Image& a, const Image& b) {
  // channels 0-2: frame t, channels 3-5: frame t+1
  const Tensor na = normalize(a);
  const Tensor nb = normalize(b);
  const std::size_t plane = na.numel();
  std::memcpy(batch.data() + (std::size_t)row * 2 * plane, na.data(), plane * 4);
  std::memcpy(batch.data() + (std::size_t)row * 2 * plane + plane, nb.data(), plane * 4);
}

}  // namespace detail

// Minibatch Adam on mean-L1 with paired random-shift augmentation. Splits the
// dataset 90/10 by episode (never by transition), trains on the former, and
// reports holdout loss per epoch. Deterministic for a given seed.
inline InverseTrainReport train_inverse(InverseModel& model, const std::vector<Episode>& episodes,
                                        const InverseTrainConfig& tc, std::uint64_t seed) {
  const InverseModelConfig& cfg = model.config();
  if (cfg.masked_input) check_masked_dataset(episodes, cfg.mask_fraction, "train_inverse");

  std::vector<int> order(episodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
  Rng split_rng = Rng(seed).fork(0x517);
  split_rng.shuffle(order);
  std::size_t holdout_eps = (std::size_t)(episodes.size() * tc.holdout_frac);
  if (holdout_eps == 0 && episodes.size() > 1) holdout_eps = 1;

  std::vector<detail::PairRef> train_pairs, holdout_pairs;
  std::set<std::uint64_t> train_ids;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const int e = order[oi];
    const bool holdout = oi < holdout_eps;
    const Episode& ep = episodes[e];
    if (ep.size() < 2) continue;
    if (!holdout) train_ids.insert(episode_uid(ep));
    for (int t = 0; t + 1 < (int)ep.size(); ++t) {
      (holdout ? holdout_pairs : train_pairs).push_back({e, t});
    }
  }
  if (train_pairs.size() < (std::size_t)tc.batch)
    throw EpisodeError("train_inverse: fewer training pairs than one batch");
  model.set_train_episode_ids(std::move(train_ids));

  const int hw = cfg.image_hw;
  auto params = model.params().param_tensors();
  AdamState adam(params, tc.adam);
  Rng rng = Rng(seed).fork(0x7e41);
  InverseTrainReport report;

  auto holdout_eval = [&]() {
    if (holdout_pairs.empty()) return 0.0;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < holdout_pairs.size(); start += tc.batch) {
      const std::size_t n = std::min((std::size_t)tc.batch, holdout_pairs.size() - start);
      Tensor input({(int)n, cfg.in_channels, hw, hw});
      Tensor target({(int)n, cfg.out_dim});
      for (std::size_t i = 0; i < n; ++i) {
        const auto [e, t] = holdout_pairs[start + i];
        const Episode& ep = episodes[e];
        detail::fill_pair_input(input, (int)i, ep.transitions[t].image,
                                ep.transitions[t + 1].image);
        std::memcpy(target.data() + i * 4, ep.transitions[t].action.data(), 16);
      }
      const Tensor pred = model.forward(nullptr, input, BnMode::kEval);
      total += l1_loss(nullptr, pred, target).item() * (double)n;
      count += n;
    }
    return total / (double)count;
  };

  std::vector<std::size_t> idx(train_pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(idx);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + tc.batch <= idx.size(); start += tc.batch) {
      Tensor input({tc.batch, cfg.in_channels, hw, hw});
      Tensor target({tc.batch, cfg.out_dim});
      for (int i = 0; i < tc.batch; ++i) {
        const auto [e, t] = train_pairs[idx[start + i]];
        const Episode& ep = episodes[e];
        auto [a, b] = random_shift_pair(ep.transitions[t].image, ep.transitions[t + 1].image,
                                        rng, tc.shift_pad, tc.shift_prob);
        detail::fill_pair_input(input, i, a, b);
        std::memcpy(target.data() + (std::size_t)i * 4, ep.transitions[t].action.data(), 16);
      }
      model.params().zero_grad();
      Tape tape;
      Tensor pred = model.forward(&tape, input, BnMode::kTrain);
      Tensor loss = l1_loss(&tape, pred, target);
      const float lv = loss.item();
      if (!std::isfinite(lv))
        throw TensorError("train_inverse: non-finite loss at epoch " + std::to_string(epoch) +
                          " batch " + std::to_string(batches) + "; aborting");
      tape.backward(loss);
      adam_step(params, adam);
      epoch_loss += lv;
      ++batches;
    }
    report.train_loss.push_back(batches ? epoch_loss / (double)batches : 0.0);
    report.holdout_loss.push_back(holdout_eval());
  }
  return report;
}

// ---------------------------------------------------------------------------
// prediction / labeling / validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_pair_masked(const InverseModelConfig& cfg, const Image& a, const Image& b) {
  if (!cfg.masked_input) return;
  if (!mask_region_is_zero(a, cfg.mask_fraction) || !mask_region_is_zero(b, cfg.mask_fraction))
    throw ImageError(
        "predict: unmasked input detected (nonzero pixels in mask region); the model was "
        "trained on masked images");
}

}  // namespace detail

// Batched inference over consecutive frame pairs of one episode; returns one
// clamped action per pair.
inline std::vector<std::array<float, 4>> predict_episode(const InverseModel& model,
                                                         const Episode& ep) {
  const InverseModelConfig& cfg = model.config();
  const int pairs = (int)ep.size() - 1;
  if (pairs <= 0) return {};
  for (const Transition& t : ep.transitions)
    if (cfg.masked_input && !mask_region_is_zero(t.image, cfg.mask_fraction))
      throw ImageError("predict: unmasked input detected (nonzero pixels in mask region)");
  std::vector<std::array<float, 4>> out((std::size_t)pairs);
  const int hw = cfg.image_hw;
  constexpr int kChunk = 64;
  for (int start = 0; start < pairs; start += kChunk) {
    const int n = std::min(kChunk, pairs - start);
    Tensor input({n, cfg.in_channels, hw, hw});
    for (int i = 0; i < n; ++i)
      detail::fill_pair_input(input, i, ep.transitions[start + i].image,
                              ep.transitions[start + i + 1].image);
    Tensor pred = model.forward(nullptr, input, BnMode::kEval);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < 4; ++d)
        out[start + i][d] = std::clamp(pred.data()[(std::size_t)i * 4 + d], -1.0f, 1.0f);
  }
  return out;
}

// Single-pair inference (frames must be masked when the model expects it).
inline std::array<float, 4> predict(const InverseModel& model, const Image& frame_t,
                                    const Image& frame_t1) {
  detail::check_pair_masked(model.config(), frame_t, frame_t1);
  Episode tmp;
  tmp.transitions.resize(2);
  tmp.transitions[0].image = frame_t;
  tmp.transitions[1].image = frame_t1;
  return predict_episode(model, tmp)[0];
}

// Labels demonstration episodes with inferred actions and grasp states:
// a_t = f(o_t, o_t+1); s_0 = open; s_t = sign of the previous inferred gripper
// action. The final frame has no successor and is dropped. Episodes shorter
// than 2 frames are skipped and counted.
inline std::vector<Episode> label_demos(const InverseModel& model,
                                        const std::vector<Episode>& demos,
                                        int* skipped = nullptr) {
  std::vector<Episode> labeled;
  int skip_count = 0;
  for (const Episode& demo : demos) {
    if (demo.size() < 2) {
      ++skip_count;
      continue;
    }
    const auto actions = predict_episode(model, demo);
    Episode out;
    out.metadata = demo.metadata;
    out.metadata["labeled"] = "1";
    out.transitions.resize(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) {
      Transition& tr = out.transitions[t];
      tr.image = demo.transitions[t].image;
      tr.action = actions[t];
      tr.grasp_state = t == 0 ? (std::int8_t)1
                              : (std::int8_t)(actions[t - 1][3] >= 0.0f ? 1 : -1);
      tr.terminal = t + 1 == actions.size();
    }
    labeled.push_back(std::move(out));
  }
  if (skipped) *skipped = skip_count;
  return labeled;
}

struct ValidationReport {
  std::array<double, 4> per_dim_l1{};
  double gripper_sign_accuracy = 0.0;
  double smoothness = 0.0;  // mean successive-difference norm of predictions
  std::size_t pairs = 0;

  std::string serialize() const {
    std::ostringstream os;
    os.precision(10);
    for (int d = 0; d < 4; ++d) os << "per_dim_l1." << d << "\t" << per_dim_l1[d] << "\n";
    os << "gripper_sign_accuracy\t" << gripper_sign_accuracy << "\n";
    os << "smoothness\t" << smoothness << "\n";
    os << "pairs\t" << pairs << "\n";
    return os.str();
  }

  static ValidationReport deserialize(const std::string& text) {
    ValidationReport r;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      const std::string key = line.substr(0, tab);
      const double value = std::stod(line.substr(tab + 1));
      if (key.rfind("per_dim_l1.", 0) == 0)
        r.per_dim_l1[(std::size_t)(key.back() - '0')] = value;
      else if (key == "gripper_sign_accuracy")
        r.gripper_sign_accuracy = value;
      else if (key == "smoothness")
        r.smoothness = value;
      else if (key == "pairs")
        r.pairs = (std::size_t)value;
    }
    return r;
  }
};

// Evaluates the model against episodes with ground-truth actions. The holdout
// must be disjoint (by episode) from what the model was trained on.
inline ValidationReport validate(const InverseModel& model, const std::vector<Episode>& holdout) {
  for (const Episode& ep : holdout)
    if (model.train_episode_ids().count(episode_uid(ep)))
      throw EpisodeError("validate: holdout episode " + hex64(episode_uid(ep)) +
                         " overlaps the training set");
  ValidationReport report;
  std::array<double, 4> abs_err{};
  std::size_t pairs = 0, sign_hits = 0;
  double smooth_total = 0.0;
  std::size_t smooth_eps = 0;
  for (const Episode& ep : holdout) {
    if (ep.size() < 2) continue;
    const auto pred = predict_episode(model, ep);
    double diff_norm = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
      const auto& truth = ep.transitions[t].action;
      for (int d = 0; d < 4; ++d) abs_err[d] += std::abs((double)pred[t][d] - truth[d]);
      if ((pred[t][3] >= 0) == (truth[3] >= 0)) ++sign_hits;
      if (t > 0) {
        double s = 0;
        for (int d = 0; d < 4; ++d) {
          const double dd = (double)pred[t][d] - pred[t - 1][d];
          s += dd * dd;
        }
        diff_norm += std::sqrt(s);
      }
      ++pairs;
    }
    if (pred.size() > 1) {
      smooth_total += diff_norm / (double)(pred.size() - 1);
      ++smooth_eps;
    }
  }
  if (pairs == 0) throw EpisodeError("validate: no usable pairs in holdout");
  for (int d = 0; d < 4; ++d) report.per_dim_l1[d] = abs_err[d] / (double)pairs;
  report.gripper_sign_accuracy = (double)sign_hits / (double)pairs;
  report.smoothness = smooth_eps ? smooth_total / (double)smooth_eps : 0.0;
  report.pairs = pairs;
  return report;
}

}  // namespace handcam
