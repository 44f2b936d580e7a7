#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "handcam/tensor.hpp"

namespace handcam {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Per-parameter Adam moments plus shared step count.
struct AdamState {
  AdamConfig hyper;
  long long t = 0;  // completed steps
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  explicit AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {}) : hyper(cfg) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
      m.emplace_back(p.numel(), 0.0f);
      v.emplace_back(p.numel(), 0.0f);
    }
  }
};

// Standard Adam with bias correction. Reads each parameter's grad buffer and
// applies the update in place; increments state.t by exactly 1.
inline void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (params.size() != state.m.size())
    throw TensorError("adam_step: parameter count does not match state");
  const AdamConfig& h = state.hyper;
  const long long t = state.t + 1;
  const float bc1 = 1.0f - std::pow(h.beta1, (float)t);
  const float bc2 = 1.0f - std::pow(h.beta2, (float)t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (p.numel() != state.m[i].size())
      throw TensorError("adam_step: parameter " + std::to_string(i) + " shape changed");
    const float* g = p.grad();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      if (!std::isfinite(g[j]))
        throw TensorError("adam_step: non-finite gradient in parameter " + std::to_string(i) +
                          "; training halted");
    }
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    float* w = p.data();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0f - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0f - h.beta2) * g[j] * g[j];
      const float mhat = m[j] / bc1;
      const float vhat = v[j] / bc2;
      w[j] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
  state.t = t;
}

}  // namespace handcam
