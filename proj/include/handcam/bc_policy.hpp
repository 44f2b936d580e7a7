#pragma once

#include <array>
#include <cstring>
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
#include "handcam/render.hpp"
#include "handcam/rng.hpp"
#include "handcam/sim.hpp"

namespace handcam {

struct PolicyConfig {
  int image_hw = 64;
  int conv_filters = 32;
  int kernel = 3;
  std::array<int, 4> strides{2, 1, 1, 1};
  int padding = 0;
  int encoder_latent = 50;  // width of both encoder feedforward layers
  int head_latent = 64;
  int out_dim = 4;
  bool grasp_conditioned = true;
  bool masked_input = true;
  float mask_fraction = 0.36f;

  static PolicyConfig desk() { return PolicyConfig{}; }

  static PolicyConfig paper() {
    PolicyConfig cfg;
    cfg.image_hw = 100;
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

  int head_input() const { return encoder_latent + (grasp_conditioned ? 1 : 0); }
};

class BcPolicy {
 public:
  BcPolicy(const PolicyConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng(seed).fork(0xbc);
    (void)cfg_.flatten_dim();
    conv_[0] = Conv2dLayer(ps_, "enc.conv1", 3, cfg.conv_filters, cfg.kernel, cfg.strides[0],
                           cfg.padding, rng);
    bn_[0] = BatchNormLayer(ps_, "enc.bn1", cfg.conv_filters);
    for (int i = 1; i < 4; ++i) {
      conv_[i] = Conv2dLayer(ps_, "enc.conv" + std::to_string(i + 1), cfg.conv_filters,
                             cfg.conv_filters, cfg.kernel, cfg.strides[i], cfg.padding, rng);
      bn_[i] = BatchNormLayer(ps_, "enc.bn" + std::to_string(i + 1), cfg.conv_filters);
    }
    ff1_ = LinearLayer(ps_, "enc.ff1", cfg.flatten_dim(), cfg.encoder_latent, rng);
    ff_bn1_ = BatchNormLayer(ps_, "enc.ff_bn1", cfg.encoder_latent);
    ff2_ = LinearLayer(ps_, "enc.ff2", cfg.encoder_latent, cfg.encoder_latent, rng);
    ff_bn2_ = BatchNormLayer(ps_, "enc.ff_bn2", cfg.encoder_latent);
    head1_ = LinearLayer(ps_, "head.ff1", cfg.head_input(), cfg.head_latent, rng);
    head_bn1_ = BatchNormLayer(ps_, "head.bn1", cfg.head_latent);
    head_out_ = LinearLayer(ps_, "head.out", cfg.head_latent, cfg.out_dim, rng);
  }

  // images: [N,3,H,W]; grasp: [N,1] in {-1,+1} (ignored when unconditioned).
  Tensor forward(Tape* tape, const Tensor& images, const Tensor& grasp, BnMode mode) const {
    Tensor h = images;
    for (int i = 0; i < 4; ++i) {
      h = conv_[i].forward(tape, h);
      h = bn_[i].forward(tape, h, mode);
      h = relu(tape, h);
    }
    h = flatten(tape, h);
    h = relu(tape, ff_bn1_.forward(tape, ff1_.forward(tape, h), mode));
    h = relu(tape, ff_bn2_.forward(tape, ff2_.forward(tape, h), mode));
    if (cfg_.grasp_conditioned) h = concat_channels(tape, h, grasp);
    h = relu(tape, head_bn1_.forward(tape, head1_.forward(tape, h), mode));
    return head_out_.forward(tape, h);
  }

  const PolicyConfig& config() const { return cfg_; }
  ParamSet& params() { return ps_; }
  const ParamSet& params() const { return ps_; }

  void save(const std::string& path) const {
    auto tensors = ps_.all_tensors();
    auto meta = [&](const std::string& name, float v) {
      tensors.emplace_back("meta." + name, Tensor::scalar(v));
    };
    meta("image_hw", (float)cfg_.image_hw);
    meta("conv_filters", (float)cfg_.conv_filters);
    meta("encoder_latent", (float)cfg_.encoder_latent);
    meta("head_latent", (float)cfg_.head_latent);
    meta("out_dim", (float)cfg_.out_dim);
    meta("grasp_conditioned", cfg_.grasp_conditioned ? 1.0f : 0.0f);
    meta("masked_input", cfg_.masked_input ? 1.0f : 0.0f);
    meta("mask_fraction", cfg_.mask_fraction);
    save_checkpoint(path, tensors);
  }

  static BcPolicy load(const std::string& path, std::uint64_t seed = 0) {
    auto m = checkpoint_map(path);
    auto meta = [&](const std::string& name) {
      auto it = m.find("meta." + name);
      if (it == m.end()) throw CheckpointError("checkpoint missing meta." + name);
      return it->second.item();
    };
    PolicyConfig cfg;
    cfg.image_hw = (int)meta("image_hw");
    cfg.conv_filters = (int)meta("conv_filters");
    cfg.encoder_latent = (int)meta("encoder_latent");
    cfg.head_latent = (int)meta("head_latent");
    cfg.out_dim = (int)meta("out_dim");
    cfg.grasp_conditioned = meta("grasp_conditioned") != 0.0f;
    cfg.masked_input = meta("masked_input") != 0.0f;
    cfg.mask_fraction = meta("mask_fraction");
    BcPolicy policy(cfg, seed);
    load_into(policy.ps_, m);
    return policy;
  }

 private:
  PolicyConfig cfg_;
  ParamSet ps_;
  std::array<Conv2dLayer, 4> conv_;
  std::array<BatchNormLayer, 4> bn_;
  LinearLayer ff1_, ff2_;
  BatchNormLayer ff_bn1_, ff_bn2_;
  LinearLayer head1_, head_out_;
  BatchNormLayer head_bn1_;
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct BcTrainConfig {
  int steps = 2000;  // fixed optimizer-step budget (no early stopping)
  int batch = 64;
  AdamConfig adam{.lr = 3e-4f};
  int shift_pad = 4;
  double shift_prob = 0.8;
};

struct BcTrainReport {
  std::vector<double> loss;  // per optimizer step
  std::size_t robot_samples = 0;
  std::size_t human_samples = 0;
};

// Behavioral cloning on the union of robot and labeled-human samples.
// Minibatches are drawn uniformly from the concatenated pool, so each dataset
// contributes in proportion to its size (the objective is an unweighted sum).
inline BcTrainReport train_bc(BcPolicy& policy, const std::vector<Episode>& robot_eps,
                              const std::vector<Episode>& human_eps, const BcTrainConfig& tc,
                              std::uint64_t seed) {
  const PolicyConfig& cfg = policy.config();
  struct SampleRef {
    const Episode* ep;
    int t;
  };
  std::vector<SampleRef> pool;
  auto add_episodes = [&](const std::vector<Episode>& eps, std::size_t& counter) {
    for (const Episode& ep : eps) {
      if (cfg.masked_input) check_masked_episode(ep, cfg.mask_fraction, "train_bc");
      // the final transition of a raw episode is a frame placeholder; labeled
      // episodes carry a real action on every transition
      const bool labeled = ep.metadata.count("labeled") && ep.metadata.at("labeled") == "1";
      const int usable = labeled ? (int)ep.size() : (int)ep.size() - 1;
      for (int t = 0; t < usable; ++t) {
        for (float a : ep.transitions[t].action)
          if (a < -1.0f || a > 1.0f)
            throw EpisodeError("train_bc: action label outside [-1,1]");
        pool.push_back({&ep, t});
        ++counter;
      }
    }
  };
  BcTrainReport report;
  add_episodes(robot_eps, report.robot_samples);
  add_episodes(human_eps, report.human_samples);
  if (pool.empty()) throw EpisodeError("train_bc: no training samples");

  const int hw = cfg.image_hw;
  auto params = policy.params().param_tensors();
  AdamState adam(params, tc.adam);
  Rng rng = Rng(seed).fork(0xbc72);

  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::size_t cursor = idx.size();  // trigger shuffle on first use

  const int batch = (int)std::min((std::size_t)tc.batch, pool.size());
  for (int step_i = 0; step_i < tc.steps; ++step_i) {
    Tensor images({batch, 3, hw, hw});
    Tensor grasp({batch, 1});
    Tensor target({batch, cfg.out_dim});
    for (int i = 0; i < batch; ++i) {
      if (cursor >= idx.size()) {
        rng.shuffle(idx);
        cursor = 0;
      }
      const SampleRef& s = pool[idx[cursor++]];
      const Transition& tr = s.ep->transitions[s.t];
      Image img = random_shift(tr.image, rng, tc.shift_pad, tc.shift_prob);
      const Tensor n = normalize(img);
      std::memcpy(images.data() + (std::size_t)i * n.numel(), n.data(), n.numel() * 4);
      grasp.data()[i] = (float)tr.grasp_state;
      std::memcpy(target.data() + (std::size_t)i * 4, tr.action.data(), 16);
    }
    policy.params().zero_grad();
    Tape tape;
    Tensor pred = policy.forward(&tape, images, grasp, BnMode::kTrain);
    Tensor loss = gaussian_nll(&tape, pred, target);
    const float lv = loss.item();
    if (!std::isfinite(lv))
      throw TensorError("train_bc: non-finite loss at step " + std::to_string(step_i));
    tape.backward(loss);
    adam_step(params, adam);
    report.loss.push_back(lv);
  }
  return report;
}

// ---------------------------------------------------------------------------
// acting and rollouts
// ---------------------------------------------------------------------------

// Executable action from one observation: continuous dims clamped, gripper
// binarized by sign.
inline Action act(const BcPolicy& policy, const Image& obs, std::int8_t grasp_state) {
  const PolicyConfig& cfg = policy.config();
  if (cfg.masked_input && !mask_region_is_zero(obs, cfg.mask_fraction))
    throw ImageError("act: unmasked observation (nonzero pixels in mask region)");
  const Tensor n = normalize(obs);
  Tensor images({1, 3, cfg.image_hw, cfg.image_hw}, n.vec());
  Tensor grasp({1, 1}, std::vector<float>{(float)grasp_state});
  const Tensor out = policy.forward(nullptr, images, grasp, BnMode::kEval);
  Action a;
  a.dx = std::clamp(out.data()[0], -1.0f, 1.0f);
  a.dy = std::clamp(out.data()[1], -1.0f, 1.0f);
  a.dz = std::clamp(out.data()[2], -1.0f, 1.0f);
  a.gripper = out.data()[3] >= 0.0f ? 1.0f : -1.0f;
  return a;
}

struct RolloutResult {
  Episode episode;  // transitions carry images only when store_images is set
  bool success = false;
  bool grasped = false;  // any attach event along the trajectory
  int steps = 0;
  std::string task_id;
  std::string config_hash;
};

// Closed-loop evaluation: render -> mask -> act -> step. The grasp-state input
// is the previously executed gripper binary (open at the start). Terminates on
// success or after max_steps. Deterministic for (seed, params).
inline RolloutResult rollout(const BcPolicy& policy, const EnvConfig& cfg, const TaskSpec& task,
                             std::uint64_t seed, int max_steps, bool store_images = false) {
  RolloutResult result;
  result.task_id = cfg.task_id;
  result.config_hash = hex64(fnv1a64(cfg.describe()));
  result.episode.metadata["config_id"] = cfg.id;
  result.episode.metadata["seed"] = std::to_string(seed);
  result.episode.metadata["collector"] = "rollout";

  WorldState st = reset(cfg, seed);
  std::int8_t grasp = 1;
  for (int i = 0; i < max_steps; ++i) {
    Image obs = render(st, cfg.skin, cfg.camera);
    if (policy.config().masked_input) obs = mask_image(obs, policy.config().mask_fraction);
    const Action a = act(policy, obs, grasp);
    Transition tr;
    if (store_images) tr.image = obs;
    tr.action = {a.dx, a.dy, a.dz, a.gripper};
    tr.grasp_state = grasp;
    result.episode.transitions.push_back(std::move(tr));

    st = step(st, a);
    grasp = a.gripper >= 0 ? 1 : -1;
    result.steps = i + 1;
    if (st.held_object == task.target_id) result.grasped = true;
    if (success(st, task)) {
      result.success = true;
      break;
    }
    if (st.terminal()) break;
  }
  if (!result.episode.transitions.empty()) result.episode.transitions.back().terminal = true;
  return result;
}

}  // namespace handcam
