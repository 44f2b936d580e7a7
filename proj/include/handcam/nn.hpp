#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "handcam/checkpoint.hpp"
#include "handcam/ops.hpp"
#include "handcam/rng.hpp"
#include "handcam/tensor.hpp"

namespace handcam {

// Named-tensor bundle shared by models: trainable parameters plus persistent
// buffers (batchnorm running stats) for checkpointing.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::pair<std::string, Tensor>> buffers;

  Tensor add_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params.emplace_back(name, t);
    return t;
  }
  Tensor add_buffer(const std::string& name, Tensor t) {
    buffers.emplace_back(name, t);
    return t;
  }

  std::vector<Tensor> param_tensors() const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& [n, t] : params) out.push_back(t);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [n, t] : params) t.zero_grad();
  }

  std::vector<std::pair<std::string, Tensor>> all_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out = params;
    out.insert(out.end(), buffers.begin(), buffers.end());
    return out;
  }
};

inline Tensor uniform_init(Shape shape, float bound, Rng& rng) {
  Tensor t(std::move(shape));
  float* d = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i)
    d[i] = (float)rng.uniform(-bound, bound);
  return t;
}

struct Conv2dLayer {
  Tensor weight, bias;
  int stride = 1, padding = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamSet& ps, const std::string& name, int cin, int cout, int k,
              int stride_, int padding_, Rng& rng)
      : stride(stride_), padding(padding_) {
    const float bound = 1.0f / std::sqrt((float)(cin * k * k));
    weight = ps.add_param(name + ".weight", uniform_init({cout, cin, k, k}, bound, rng));
    bias = ps.add_param(name + ".bias", uniform_init({cout}, bound, rng));
  }

  Tensor forward(Tape* tape, const Tensor& x) const {
    return conv2d(tape, x, weight, bias, stride, padding);
  }
};

struct LinearLayer {
  Tensor weight, bias;

  LinearLayer() = default;
  LinearLayer(ParamSet& ps, const std::string& name, int din, int dout, Rng& rng) {
    const float bound = 1.0f / std::sqrt((float)din);
    weight = ps.add_param(name + ".weight", uniform_init({dout, din}, bound, rng));
    bias = ps.add_param(name + ".bias", uniform_init({dout}, bound, rng));
  }

  Tensor forward(Tape* tape, const Tensor& x) const {
    return linear(tape, x, weight, bias);
  }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  mutable BatchNormState state;
  float eps = 1e-5f;
  float momentum = 0.1f;

  BatchNormLayer() = default;
  BatchNormLayer(ParamSet& ps, const std::string& name, int channels) : state(channels) {
    gamma = ps.add_param(name + ".gamma", Tensor({channels}, 1.0f));
    beta = ps.add_param(name + ".beta", Tensor({channels}, 0.0f));
    state.running_mean = ps.add_buffer(name + ".running_mean", state.running_mean);
    state.running_var = ps.add_buffer(name + ".running_var", state.running_var);
  }

  Tensor forward(Tape* tape, const Tensor& x, BnMode mode) const {
    return batchnorm(tape, x, gamma, beta, state, mode, eps, momentum);
  }
};

// Loads checkpoint tensors into a ParamSet by name; shapes must match exactly.
inline void load_into(ParamSet& ps, const std::map<std::string, Tensor>& ckpt) {
  auto copy_into = [&](std::pair<std::string, Tensor>& entry) {
    auto it = ckpt.find(entry.first);
    if (it == ckpt.end())
      throw CheckpointError("checkpoint is missing tensor '" + entry.first + "'");
    if (it->second.shape() != entry.second.shape())
      throw CheckpointError("checkpoint tensor '" + entry.first + "' has shape " +
                            shape_str(it->second.shape()) + ", expected " +
                            shape_str(entry.second.shape()));
    std::copy(it->second.vec().begin(), it->second.vec().end(), entry.second.vec().begin());
  };
  for (auto& e : ps.params) copy_into(e);
  for (auto& e : ps.buffers) copy_into(e);
}

}  // namespace handcam
