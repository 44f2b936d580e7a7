#pragma once

#include <cstring>
#include <memory>
#include <vector>

#include <cblas.h>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "handcam/tape.hpp"
#include "handcam/tensor.hpp"

namespace handcam {

// Large short-lived buffers (conv workspaces, activation tensors) otherwise
// round-trip through mmap/munmap on glibc, and the page faults dominate the
// math at this scale. Route them through the normal heap so freed blocks get
// reused across training steps.
inline void init_numeric_runtime() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

namespace detail {

// Reused, uninitialized per-thread workspaces for the conv kernels. Slots are
// used exclusively within one op call; ops never nest.
inline float* scratch(int slot, std::size_t n) {
  struct Buf {
    std::unique_ptr<float[]> data;
    std::size_t cap = 0;
  };
  thread_local Buf bufs[4];
  Buf& b = bufs[slot];
  if (b.cap < n) {
    b.data = std::make_unique<float[]>(n);
    b.cap = n;
  }
  return b.data.get();
}

}  // namespace detail

inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
                  int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b, ldb,
              beta, c, ldc);
}

namespace detail {

inline bool want_grad(const Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

inline int conv_output_dim(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace detail {

// Valid output range [lo, hi) such that o*stride + koff - pad stays in [0, n).
inline void valid_out_range(int n, int out, int stride, int pad, int koff, int& lo, int& hi) {
  lo = 0;
  while (lo < out && lo * stride + koff - pad < 0) ++lo;
  hi = out;
  while (hi > lo && (hi - 1) * stride + koff - pad >= n) --hi;
}

// col layout: [Cin*K*K, N*Ho*Wo], column j = ((n*Ho + oy)*Wo + ox).
inline void im2col(const float* x, int n_batch, int cin, int h, int w, int k,
                   int stride, int pad, int ho, int wo, float* col) {
  const int cols = n_batch * ho * wo;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      int oy_lo, oy_hi;
      valid_out_range(h, ho, stride, pad, ky, oy_lo, oy_hi);
      for (int kx = 0; kx < k; ++kx) {
        int ox_lo, ox_hi;
        valid_out_range(w, wo, stride, pad, kx, ox_lo, ox_hi);
        float* row = col + (std::size_t)((c * k + ky) * k + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          const float* img = x + ((std::size_t)n * cin + c) * h * w;
          for (int oy = 0; oy < ho; ++oy) {
            float* dst = row + ((std::size_t)n * ho + oy) * wo;
            const int iy = oy * stride + ky - pad;
            if (oy < oy_lo || oy >= oy_hi) {
              std::memset(dst, 0, sizeof(float) * wo);
              continue;
            }
            if (ox_lo > 0) std::memset(dst, 0, sizeof(float) * ox_lo);
            if (ox_hi < wo) std::memset(dst + ox_hi, 0, sizeof(float) * (wo - ox_hi));
            const float* src = img + (std::size_t)iy * w + ((std::size_t)ox_lo * stride + kx - pad);
            if (stride == 1) {
              std::memcpy(dst + ox_lo, src, sizeof(float) * (ox_hi - ox_lo));
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                dst[ox] = src[(std::size_t)(ox - ox_lo) * stride];
            }
          }
        }
      }
    }
  }
}

inline void col2im_add(const float* col, int n_batch, int cin, int h, int w, int k,
                       int stride, int pad, int ho, int wo, float* dx) {
  const int cols = n_batch * ho * wo;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      int oy_lo, oy_hi;
      valid_out_range(h, ho, stride, pad, ky, oy_lo, oy_hi);
      for (int kx = 0; kx < k; ++kx) {
        int ox_lo, ox_hi;
        valid_out_range(w, wo, stride, pad, kx, ox_lo, ox_hi);
        const float* row = col + (std::size_t)((c * k + ky) * k + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          float* img = dx + ((std::size_t)n * cin + c) * h * w;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const int iy = oy * stride + ky - pad;
            const float* src = row + ((std::size_t)n * ho + oy) * wo;
            float* dst = img + (std::size_t)iy * w + ((std::size_t)ox_lo * stride + kx - pad);
            if (stride == 1) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox - ox_lo] += src[ox];
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox)
                dst[(std::size_t)(ox - ox_lo) * stride] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& weight,
                     const Tensor& bias, int stride, int padding) {
  if (input.rank() != 4) throw TensorError("conv2d: input must be [N,Cin,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3))
    throw TensorError("conv2d: weight must be [Cout,Cin,K,K], got " + shape_str(weight.shape()));
  if (stride < 1) throw TensorError("conv2d: stride must be >= 1");
  if (padding < 0) throw TensorError("conv2d: padding must be >= 0");
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw TensorError("conv2d: input has " + std::to_string(cin) +
                      " channels but weight expects " + std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != cout)
    throw TensorError("conv2d: bias must be [Cout]");
  if (h + 2 * padding < k || w + 2 * padding < k)
    throw TensorError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                      shape_str(input.shape()));

  const int ho = conv_output_dim(h, k, stride, padding);
  const int wo = conv_output_dim(w, k, stride, padding);
  const int ckk = cin * k * k;
  const int cols = n * ho * wo;

  init_numeric_runtime();
  float* col = detail::scratch(0, (std::size_t)ckk * cols);
  detail::im2col(input.data(), n, cin, h, w, k, stride, padding, ho, wo, col);

  // out_r[co][j] then reorder to [N,Cout,Ho,Wo]
  float* out_r = detail::scratch(1, (std::size_t)cout * cols);
  sgemm(false, false, cout, cols, ckk, weight.data(), ckk, col, cols, 0.0f, out_r, cols);

  Tensor out({n, cout, ho, wo});
  float* od = out.data();
  const float* bd = bias.data();
  const int spatial = ho * wo;
  for (int nn = 0; nn < n; ++nn)
    for (int co = 0; co < cout; ++co) {
      const float* src = out_r + ((std::size_t)co * n + nn) * spatial;
      float* dst = od + ((std::size_t)nn * cout + co) * spatial;
      const float b = bd[co];
      for (int s = 0; s < spatial; ++s) dst[s] = src[s] + b;
    }

  if (detail::want_grad(tape, {&input, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
    // the column buffer is recomputed from the saved input handle instead of
    // keeping tens of MB alive per layer until backward
    tape->record("conv2d", {input.id(), weight.id(), bias.id()}, out.id(),
                 [in_t, w_t, b_t, out_t, n, cin, h, w, cout, k, stride, padding,
                  ho, wo, ckk, cols]() mutable {
                   const int spatial = ho * wo;
                   const float* go = out_t.grad_vec().data();
                   // reorder dOut to [Cout, N*S]
                   float* go_r = detail::scratch(1, (std::size_t)cout * cols);
                   for (int nn = 0; nn < n; ++nn)
                     for (int co = 0; co < cout; ++co)
                       std::memcpy(go_r + ((std::size_t)co * n + nn) * spatial,
                                   go + ((std::size_t)nn * cout + co) * spatial,
                                   sizeof(float) * spatial);
                   if (b_t.requires_grad()) {
                     float* gb = b_t.grad();
                     for (int co = 0; co < cout; ++co) {
                       const float* row = go_r + (std::size_t)co * cols;
                       float acc = 0.0f;
                       for (int j = 0; j < cols; ++j) acc += row[j];
                       gb[co] += acc;
                     }
                   }
                   if (w_t.requires_grad()) {
                     float* col = detail::scratch(0, (std::size_t)ckk * cols);
                     detail::im2col(in_t.data(), n, cin, h, w, k, stride, padding, ho, wo,
                                    col);
                     // dW [Cout, CKK] += go_r [Cout, cols] * col^T [cols, CKK]
                     sgemm(false, true, cout, ckk, cols, go_r, cols, col, cols, 1.0f,
                           w_t.grad(), ckk);
                   }
                   if (in_t.requires_grad()) {
                     float* dcol = detail::scratch(2, (std::size_t)ckk * cols);
                     sgemm(true, false, ckk, cols, cout, w_t.data(), ckk, go_r, cols, 0.0f,
                           dcol, cols);
                     detail::col2im_add(dcol, n, cin, h, w, k, stride, padding, ho, wo,
                                        in_t.grad());
                   }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear: y = x W^T + b
// ---------------------------------------------------------------------------

inline Tensor linear(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2) throw TensorError("linear: x must be [N,Din], got " + shape_str(x.shape()));
  if (weight.rank() != 2) throw TensorError("linear: weight must be [Dout,Din]");
  const int n = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din)
    throw TensorError("linear: x has Din=" + std::to_string(din) + " but weight expects Din=" +
                      std::to_string(weight.dim(1)));
  if (bias.rank() != 1 || bias.dim(0) != dout)
    throw TensorError("linear: bias must be [Dout]");

  Tensor out({n, dout});
  sgemm(false, true, n, dout, din, x.data(), din, weight.data(), din, 0.0f, out.data(), dout);
  float* od = out.data();
  const float* bd = bias.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dout; ++j) od[(std::size_t)i * dout + j] += bd[j];

  if (detail::want_grad(tape, {&x, &weight, &bias})) {
    out.set_requires_grad(true);
    Tensor x_t = x, w_t = weight, b_t = bias, out_t = out;
    tape->record("linear", {x.id(), weight.id(), bias.id()}, out.id(),
                 [x_t, w_t, b_t, out_t, n, din, dout]() mutable {
                   const float* go = out_t.grad_vec().data();
                   if (b_t.requires_grad()) {
                     float* gb = b_t.grad();
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < dout; ++j) gb[j] += go[(std::size_t)i * dout + j];
                   }
                   if (w_t.requires_grad())  // dW [Dout,Din] += go^T [Dout,N] * x [N,Din]
                     sgemm(true, false, dout, din, n, go, dout, x_t.data(), din, 1.0f,
                           w_t.grad(), din);
                   if (x_t.requires_grad())  // dX [N,Din] += go [N,Dout] * W [Dout,Din]
                     sgemm(false, false, n, din, dout, go, dout, w_t.data(), din, 1.0f,
                           x_t.grad(), din);
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

enum class BnMode { kTrain, kEval };

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  explicit BatchNormState(int channels)
      : running_mean({channels}, 0.0f), running_var({channels}, 1.0f) {}
  BatchNormState() = default;
};

// Normalizes per channel over batch and spatial dims. x is [N,C] or [N,C,H,W].
inline Tensor batchnorm(Tape* tape, const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, BatchNormState& state, BnMode mode,
                        float eps = 1e-5f, float momentum = 0.1f) {
  if (x.rank() != 2 && x.rank() != 4)
    throw TensorError("batchnorm: x must be [N,C] or [N,C,H,W], got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1);
  const int spatial = (x.rank() == 4) ? x.dim(2) * x.dim(3) : 1;
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    throw TensorError("batchnorm: gamma/beta must be [C]");
  if (state.running_mean.dim(0) != c)
    throw TensorError("batchnorm: running stats channel mismatch");
  if (mode == BnMode::kTrain && n < 2)
    throw TensorError("batchnorm: train mode requires batch size >= 2 (variance estimator undefined for N=1)");

  const std::size_t m = (std::size_t)n * spatial;  // samples per channel
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto invstd = std::make_shared<std::vector<float>>(c);

  const float* xd = x.data();
  float* od = out.data();
  const float* gd = gamma.data();
  const float* bd = beta.data();

  auto channel_off = [&](int nn, int cc) { return ((std::size_t)nn * c + cc) * spatial; };

  if (mode == BnMode::kTrain) {
    float* rm = state.running_mean.data();
    float* rv = state.running_var.data();
    for (int cc = 0; cc < c; ++cc) {
      double sum = 0.0, sq = 0.0;
      for (int nn = 0; nn < n; ++nn) {
        const float* p = xd + channel_off(nn, cc);
        for (int s = 0; s < spatial; ++s) {
          sum += p[s];
          sq += (double)p[s] * p[s];
        }
      }
      const double mean = sum / (double)m;
      const double var = sq / (double)m - mean * mean;  // biased
      const float istd = 1.0f / std::sqrt((float)var + eps);
      (*invstd)[cc] = istd;
      const double unbiased = (m > 1) ? var * (double)m / (double)(m - 1) : var;
      rm[cc] = (1.0f - momentum) * rm[cc] + momentum * (float)mean;
      rv[cc] = (1.0f - momentum) * rv[cc] + momentum * (float)unbiased;
      for (int nn = 0; nn < n; ++nn) {
        const float* p = xd + channel_off(nn, cc);
        float* xh = xhat->data() + ((std::size_t)nn * c + cc) * spatial;
        float* o = od + channel_off(nn, cc);
        for (int s = 0; s < spatial; ++s) {
          xh[s] = (p[s] - (float)mean) * istd;
          o[s] = gd[cc] * xh[s] + bd[cc];
        }
      }
    }
  } else {
    const float* rm = state.running_mean.data();
    const float* rv = state.running_var.data();
    for (int cc = 0; cc < c; ++cc) {
      const float istd = 1.0f / std::sqrt(rv[cc] + eps);
      (*invstd)[cc] = istd;
      for (int nn = 0; nn < n; ++nn) {
        const float* p = xd + channel_off(nn, cc);
        float* xh = xhat->data() + ((std::size_t)nn * c + cc) * spatial;
        float* o = od + channel_off(nn, cc);
        for (int s = 0; s < spatial; ++s) {
          xh[s] = (p[s] - rm[cc]) * istd;
          o[s] = gd[cc] * xh[s] + bd[cc];
        }
      }
    }
  }

  if (detail::want_grad(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor x_t = x, g_t = gamma, b_t = beta, out_t = out;
    const bool train = (mode == BnMode::kTrain);
    tape->record("batchnorm", {x.id(), gamma.id(), beta.id()}, out.id(),
                 [x_t, g_t, b_t, out_t, xhat, invstd, n, c, spatial, train]() mutable {
                   const float* go = out_t.grad_vec().data();
                   const std::size_t m = (std::size_t)n * spatial;
                   std::vector<float> sum_dy(c, 0.0f), sum_dy_xhat(c, 0.0f);
                   for (int nn = 0; nn < n; ++nn)
                     for (int cc = 0; cc < c; ++cc) {
                       const std::size_t off = ((std::size_t)nn * c + cc) * spatial;
                       for (int s = 0; s < spatial; ++s) {
                         sum_dy[cc] += go[off + s];
                         sum_dy_xhat[cc] += go[off + s] * (*xhat)[off + s];
                       }
                     }
                   if (b_t.requires_grad()) {
                     float* gb = b_t.grad();
                     for (int cc = 0; cc < c; ++cc) gb[cc] += sum_dy[cc];
                   }
                   if (g_t.requires_grad()) {
                     float* gg = g_t.grad();
                     for (int cc = 0; cc < c; ++cc) gg[cc] += sum_dy_xhat[cc];
                   }
                   if (x_t.requires_grad()) {
                     float* gx = x_t.grad();
                     const float* gd = g_t.data();
                     for (int nn = 0; nn < n; ++nn)
                       for (int cc = 0; cc < c; ++cc) {
                         const std::size_t off = ((std::size_t)nn * c + cc) * spatial;
                         const float scale = gd[cc] * (*invstd)[cc];
                         if (train) {
                           const float mean_dy = sum_dy[cc] / (float)m;
                           const float mean_dy_xhat = sum_dy_xhat[cc] / (float)m;
                           for (int s = 0; s < spatial; ++s)
                             gx[off + s] += scale * (go[off + s] - mean_dy -
                                                     (*xhat)[off + s] * mean_dy_xhat);
                         } else {
                           for (int s = 0; s < spatial; ++s) gx[off + s] += scale * go[off + s];
                         }
                       }
                   }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// relu / concat_channels / flatten / scale / reduce_sum
// ---------------------------------------------------------------------------

inline Tensor relu(Tape* tape, const Tensor& x) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  for (std::size_t i = 0; i < x.numel(); ++i) od[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor x_t = x, out_t = out;
    tape->record("relu", {x.id()}, out.id(), [x_t, out_t]() mutable {
      const float* go = out_t.grad_vec().data();
      const float* xd = x_t.data();
      float* gx = x_t.grad();
      for (std::size_t i = 0; i < x_t.numel(); ++i)
        if (xd[i] > 0.0f) gx[i] += go[i];
    });
  }
  return out;
}

// Concatenates along dim 1. Inputs are [N,C] or [N,C,H,W]; spatial dims must match.
inline Tensor concat_channels(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 4))
    throw TensorError("concat_channels: inputs must both be [N,C] or [N,C,H,W]");
  if (a.dim(0) != b.dim(0)) throw TensorError("concat_channels: batch dims differ");
  const int spatial = (a.rank() == 4) ? a.dim(2) * a.dim(3) : 1;
  if (a.rank() == 4 && (a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)))
    throw TensorError("concat_channels: spatial dims differ: " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  const int n = a.dim(0), c1 = a.dim(1), c2 = b.dim(1);
  Shape out_shape = a.shape();
  out_shape[1] = c1 + c2;
  Tensor out(out_shape);
  const std::size_t a_blk = (std::size_t)c1 * spatial, b_blk = (std::size_t)c2 * spatial;
  for (int nn = 0; nn < n; ++nn) {
    std::memcpy(out.data() + nn * (a_blk + b_blk), a.data() + nn * a_blk,
                sizeof(float) * a_blk);
    std::memcpy(out.data() + nn * (a_blk + b_blk) + a_blk, b.data() + nn * b_blk,
                sizeof(float) * b_blk);
  }
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor a_t = a, b_t = b, out_t = out;
    tape->record("concat_channels", {a.id(), b.id()}, out.id(),
                 [a_t, b_t, out_t, n, a_blk, b_blk]() mutable {
                   const float* go = out_t.grad_vec().data();
                   for (int nn = 0; nn < n; ++nn) {
                     const float* src = go + nn * (a_blk + b_blk);
                     if (a_t.requires_grad()) {
                       float* ga = a_t.grad() + nn * a_blk;
                       for (std::size_t i = 0; i < a_blk; ++i) ga[i] += src[i];
                     }
                     if (b_t.requires_grad()) {
                       float* gb = b_t.grad() + nn * b_blk;
                       for (std::size_t i = 0; i < b_blk; ++i) gb[i] += src[a_blk + i];
                     }
                   }
                 });
  }
  return out;
}

inline Tensor flatten(Tape* tape, const Tensor& x) {
  if (x.rank() < 2) throw TensorError("flatten: rank must be >= 2");
  const int n = x.dim(0);
  const int d = (int)(x.numel() / (std::size_t)n);
  Tensor out({n, d}, x.vec());  // row-major: same buffer layout
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor x_t = x, out_t = out;
    tape->record("flatten", {x.id()}, out.id(), [x_t, out_t]() mutable {
      const float* go = out_t.grad_vec().data();
      float* gx = x_t.grad();
      for (std::size_t i = 0; i < x_t.numel(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

inline Tensor scale(Tape* tape, const Tensor& x, float factor) {
  Tensor out(x.shape());
  const float* xd = x.data();
  float* od = out.data();
  for (std::size_t i = 0; i < x.numel(); ++i) od[i] = xd[i] * factor;
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor x_t = x, out_t = out;
    tape->record("scale", {x.id()}, out.id(), [x_t, out_t, factor]() mutable {
      const float* go = out_t.grad_vec().data();
      float* gx = x_t.grad();
      for (std::size_t i = 0; i < x_t.numel(); ++i) gx[i] += go[i] * factor;
    });
  }
  return out;
}

inline Tensor reduce_sum(Tape* tape, const Tensor& x) {
  double acc = 0.0;
  const float* xd = x.data();
  for (std::size_t i = 0; i < x.numel(); ++i) acc += xd[i];
  Tensor out = Tensor::scalar((float)acc);
  if (detail::want_grad(tape, {&x})) {
    out.set_requires_grad(true);
    Tensor x_t = x, out_t = out;
    tape->record("reduce_sum", {x.id()}, out.id(), [x_t, out_t]() mutable {
      const float g = out_t.grad_vec()[0];
      float* gx = x_t.grad();
      for (std::size_t i = 0; i < x_t.numel(); ++i) gx[i] += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses (mean over batch; sum over remaining dims)
// ---------------------------------------------------------------------------

inline Tensor l1_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "l1_loss");
  const int n = pred.dim(0);
  if (n < 1) throw TensorError("l1_loss: empty batch");
  double acc = 0.0;
  const float* pd = pred.data();
  const float* td = target.data();
  for (std::size_t i = 0; i < pred.numel(); ++i) acc += std::abs((double)pd[i] - td[i]);
  Tensor out = Tensor::scalar((float)(acc / n));
  if (detail::want_grad(tape, {&pred, &target})) {
    out.set_requires_grad(true);
    Tensor p_t = pred, t_t = target, out_t = out;
    tape->record("l1_loss", {pred.id(), target.id()}, out.id(), [p_t, t_t, out_t, n]() mutable {
      const float g = out_t.grad_vec()[0] / (float)n;
      const float* pd = p_t.data();
      const float* td = t_t.data();
      if (p_t.requires_grad()) {
        float* gp = p_t.grad();
        for (std::size_t i = 0; i < p_t.numel(); ++i) {
          const float d = pd[i] - td[i];
          // subgradient 0 at ties
          gp[i] += d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
        }
      }
      if (t_t.requires_grad()) {
        float* gt = t_t.grad();
        for (std::size_t i = 0; i < t_t.numel(); ++i) {
          const float d = pd[i] - td[i];
          gt[i] -= d > 0.0f ? g : (d < 0.0f ? -g : 0.0f);
        }
      }
    });
  }
  return out;
}

// NLL of target under a unit-variance Gaussian centered at pred, constants
// dropped: 0.5 * mean_N ||pred - target||^2.
inline Tensor gaussian_nll(Tape* tape, const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "gaussian_nll");
  const int n = pred.dim(0);
  if (n < 1) throw TensorError("gaussian_nll: empty batch");
  double acc = 0.0;
  const float* pd = pred.data();
  const float* td = target.data();
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = (double)pd[i] - td[i];
    acc += d * d;
  }
  Tensor out = Tensor::scalar((float)(0.5 * acc / n));
  if (detail::want_grad(tape, {&pred, &target})) {
    out.set_requires_grad(true);
    Tensor p_t = pred, t_t = target, out_t = out;
    tape->record("gaussian_nll", {pred.id(), target.id()}, out.id(),
                 [p_t, t_t, out_t, n]() mutable {
                   const float g = out_t.grad_vec()[0] / (float)n;
                   const float* pd = p_t.data();
                   const float* td = t_t.data();
                   if (p_t.requires_grad()) {
                     float* gp = p_t.grad();
                     for (std::size_t i = 0; i < p_t.numel(); ++i) gp[i] += g * (pd[i] - td[i]);
                   }
                   if (t_t.requires_grad()) {
                     float* gt = t_t.grad();
                     for (std::size_t i = 0; i < t_t.numel(); ++i) gt[i] -= g * (pd[i] - td[i]);
                   }
                 });
  }
  return out;
}

}  // namespace handcam
