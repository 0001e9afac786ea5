#pragma once

#include <cstddef>
#include <utility>

#include "hypernet/conv.hpp"
#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/wavelet.hpp"

namespace hypernet {

template <typename T>
struct BlockParams {
  ConvKernel<T> K;
  Tensor<T> b;

  BlockParams() = default;
  BlockParams(ConvKernel<T> k, Tensor<T> bias) : K(std::move(k)), b(std::move(bias)) {
    if (b.rank() != 1 || b.dim(0) != K.c_out()) {
      throw ShapeError("block bias must have shape (" + std::to_string(K.c_out()) + ")");
    }
  }
};

/// The leapfrog pair (Y_{j-1}, Y_j) plus the number of coarsenings so far.
template <typename T>
struct StatePair {
  Tensor<T> y_prev;
  Tensor<T> y_curr;
  int level = 0;

  StatePair() = default;
  StatePair(Tensor<T> prev, Tensor<T> curr, int lvl)
      : y_prev(std::move(prev)), y_curr(std::move(curr)), level(lvl) {
    require_same_shape(y_prev, y_curr, "StatePair");
  }

  std::size_t bytes() const { return y_prev.bytes() + y_curr.bytes(); }
};

/// f(Y, theta) = -K^T relu(K Y + b). Output shape equals input shape.
template <typename T>
Tensor<T> symmetric_layer(const Tensor<T>& y, const BlockParams<T>& p) {
  Tensor<T> z = conv2d(y, p.K, &p.b);
  Tensor<T> r = relu(z);
  Tensor<T> out = conv2d_adjoint(r, p.K);
  T* v = out.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) v[i] = -v[i];
  return out;
}

/// Where a block's parameter cotangents accumulate. Null members skip that
/// parameter (used by finite-difference probes that only need state grads).
template <typename T>
struct BlockGrad {
  Tensor<T>* K = nullptr;
  Tensor<T>* b = nullptr;
};

/// VJP of symmetric_layer: cotangent w.r.t. y returned, parameter cotangents
/// accumulated into `acc`.
template <typename T>
Tensor<T> symmetric_layer_vjp(const Tensor<T>& y, const Tensor<T>& g,
                              const BlockParams<T>& p, BlockGrad<T> acc = {}) {
  Tensor<T> z = conv2d(y, p.K, &p.b);
  Tensor<T> gr = conv2d(g, p.K);
  T* grv = gr.raw();
  for (std::size_t i = 0; i < gr.numel(); ++i) grv[i] = -grv[i];
  Tensor<T> gz = relu_vjp(z, gr);
  if (acc.K) {
    Tensor<T> gk = conv2d_kernel_grad(y, gz, p.K);
    Tensor<T> r = relu(z);
    Tensor<T> gk2 = conv2d_kernel_grad(g, r, p.K);
    axpy(T(-1), gk2, gk);
    axpy(T(1), gk, *acc.K);
  }
  if (acc.b) {
    Tensor<T> gb = conv2d_bias_grad(gz);
    axpy(T(1), gb, *acc.b);
  }
  return conv2d_adjoint(gz, p.K);
}

/// Resolution change applied inside a leapfrog step. Coarsen packs each 2x2
/// block into 4 channels, Refine unpacks; both are orthonormal so the adjoint
/// equals the inverse.
enum class StepTransform { None, Coarsen, Refine };

template <typename T>
Tensor<T> apply_transform(const Tensor<T>& x, StepTransform t) {
  switch (t) {
    case StepTransform::Coarsen: return haar_forward(x);
    case StepTransform::Refine: return haar_inverse(x);
    default: return x;
  }
}

template <typename T>
Tensor<T> apply_transform_inverse(const Tensor<T>& x, StepTransform t) {
  switch (t) {
    case StepTransform::Coarsen: return haar_inverse(x);
    case StepTransform::Refine: return haar_forward(x);
    default: return x;
  }
}

inline int level_delta(StepTransform t) {
  return t == StepTransform::Coarsen ? 1 : t == StepTransform::Refine ? -1 : 0;
}

/// One hyperbolic block: with TP = T(y_prev), TC = T(y_curr),
///   y_prev' = TC
///   y_curr' = 2 TC - TP + f(TC, p)
/// The same transform hits both lagging states, which keeps the step exactly
/// invertible across resolution changes.
template <typename T>
StatePair<T> leapfrog_step(const StatePair<T>& s, const BlockParams<T>& p,
                           StepTransform t) {
  Tensor<T> tp = apply_transform(s.y_prev, t);
  Tensor<T> tc = apply_transform(s.y_curr, t);
  Tensor<T> next = symmetric_layer(tc, p);
  T* nv = next.raw();
  const T* cv = tc.raw();
  const T* pv = tp.raw();
  for (std::size_t i = 0; i < next.numel(); ++i) nv[i] += T(2) * cv[i] - pv[i];
  return StatePair<T>(std::move(tc), std::move(next), s.level + level_delta(t));
}

/// Exact algebraic reversal of leapfrog_step: recovers the pre-step pair from
/// the post-step pair. f is recomputed at the same argument as forward.
template <typename T>
StatePair<T> leapfrog_reverse(const StatePair<T>& s_next, const BlockParams<T>& p,
                              StepTransform t) {
  const Tensor<T>& tc = s_next.y_prev;
  Tensor<T> tprev = symmetric_layer(tc, p);
  T* pv = tprev.raw();
  const T* cv = tc.raw();
  const T* nv = s_next.y_curr.raw();
  for (std::size_t i = 0; i < tprev.numel(); ++i) pv[i] += T(2) * cv[i] - nv[i];
  Tensor<T> y_prev = apply_transform_inverse(tprev, t);
  Tensor<T> y_curr = apply_transform_inverse(tc, t);
  return StatePair<T>(std::move(y_prev), std::move(y_curr), s_next.level - level_delta(t));
}

/// VJP of leapfrog_step. `s` is the block's input pair; (gp_next, gc_next)
/// are cotangents of the output pair. Returns cotangents of the input pair
/// and accumulates parameter cotangents into `acc` when given.
template <typename T>
StatePair<T> leapfrog_vjp(const StatePair<T>& s, const BlockParams<T>& p,
                          StepTransform t, const Tensor<T>& gp_next,
                          const Tensor<T>& gc_next, BlockGrad<T> acc = {}) {
  Tensor<T> tc = apply_transform(s.y_curr, t);
  Tensor<T> gtc = symmetric_layer_vjp(tc, gc_next, p, acc);
  T* gv = gtc.raw();
  const T* gp = gp_next.raw();
  const T* gc = gc_next.raw();
  for (std::size_t i = 0; i < gtc.numel(); ++i) gv[i] += gp[i] + T(2) * gc[i];
  Tensor<T> gtp(gc_next.shape());
  T* gpv = gtp.raw();
  for (std::size_t i = 0; i < gtp.numel(); ++i) gpv[i] = -gc[i];
  // The transforms are orthonormal, so pulling a cotangent back through T
  // is applying T's inverse.
  Tensor<T> g_prev = apply_transform_inverse(gtp, t);
  Tensor<T> g_curr = apply_transform_inverse(gtc, t);
  return StatePair<T>(std::move(g_prev), std::move(g_curr), s.level);
}

template <typename T>
StatePair<T> hyper_step(const StatePair<T>& s, const BlockParams<T>& p, bool coarsen) {
  return leapfrog_step(s, p, coarsen ? StepTransform::Coarsen : StepTransform::None);
}

template <typename T>
StatePair<T> hyper_reverse(const StatePair<T>& s_next, const BlockParams<T>& p,
                           bool coarsen) {
  return leapfrog_reverse(s_next, p, coarsen ? StepTransform::Coarsen : StepTransform::None);
}

template <typename T>
StatePair<T> up_step(const StatePair<T>& s, const BlockParams<T>& p, bool refine) {
  return leapfrog_step(s, p, refine ? StepTransform::Refine : StepTransform::None);
}

template <typename T>
StatePair<T> up_reverse(const StatePair<T>& s_next, const BlockParams<T>& p,
                        bool refine) {
  return leapfrog_reverse(s_next, p, refine ? StepTransform::Refine : StepTransform::None);
}

/// First layer: widens the image to the working channel count. Sits outside
/// the reversible chain; its input is retained for the parameter gradient.
template <typename T>
StatePair<T> opening_layer(const Tensor<T>& x, const ConvKernel<T>& k,
                           const Tensor<T>& bias) {
  Tensor<T> y = conv2d(x, k, &bias);
  Tensor<T> y2 = y;
  return StatePair<T>(std::move(y2), std::move(y), 0);
}

/// Global-average-pool + affine: logits[t] = sum_c Wc[t,c] * mean_hw(y[c]) + bc[t].
template <typename T>
Tensor<T> classifier_head(const Tensor<T>& y, const Tensor<T>& Wc,
                          const Tensor<T>& bc) {
  if (y.rank() != 3 || Wc.rank() != 2 || bc.rank() != 1) {
    throw ShapeError("classifier_head: want y (c,h,w), Wc (k,c), bc (k)");
  }
  const std::size_t c = y.dim(0), hw = y.dim(1) * y.dim(2);
  const std::size_t k = Wc.dim(0);
  if (Wc.dim(1) != c || bc.dim(0) != k) {
    throw ShapeError("classifier_head: Wc " + Wc.shape_str() + " vs y " + y.shape_str());
  }
  std::vector<double> feat(c, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* row = y.raw() + ci * hw;
    double acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += row[i];
    feat[ci] = acc / double(hw);
  }
  Tensor<T> logits({k});
  for (std::size_t t = 0; t < k; ++t) {
    double acc = double(bc[t]);
    const T* wrow = Wc.raw() + t * c;
    for (std::size_t ci = 0; ci < c; ++ci) acc += double(wrow[ci]) * feat[ci];
    logits[t] = static_cast<T>(acc);
  }
  return logits;
}

template <typename T>
struct HeadGrad {
  Tensor<T>* W = nullptr;
  Tensor<T>* b = nullptr;
};

template <typename T>
Tensor<T> classifier_head_vjp(const Tensor<T>& y, const Tensor<T>& Wc,
                              const Tensor<T>& g, HeadGrad<T> acc = {}) {
  const std::size_t c = y.dim(0), hw = y.dim(1) * y.dim(2);
  const std::size_t k = Wc.dim(0);
  if (acc.W) {
    for (std::size_t t = 0; t < k; ++t) {
      T* gw = acc.W->raw() + t * c;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const T* row = y.raw() + ci * hw;
        double mean = 0;
        for (std::size_t i = 0; i < hw; ++i) mean += row[i];
        gw[ci] += static_cast<T>(double(g[t]) * mean / double(hw));
      }
      if (acc.b) (*acc.b)[t] += g[t];
    }
  }
  Tensor<T> gy(y.shape());
  for (std::size_t ci = 0; ci < c; ++ci) {
    double acc_c = 0;
    for (std::size_t t = 0; t < k; ++t) acc_c += double(Wc.raw()[t * c + ci]) * double(g[t]);
    const T val = static_cast<T>(acc_c / double(hw));
    T* row = gy.raw() + ci * hw;
    for (std::size_t i = 0; i < hw; ++i) row[i] = val;
  }
  return gy;
}

/// Flatten + affine head variant: logits[t] = sum_i Wc[t,i] * vec(y)[i] + bc[t].
template <typename T>
Tensor<T> flat_head(const Tensor<T>& y, const Tensor<T>& Wc, const Tensor<T>& bc) {
  if (y.rank() != 3 || Wc.rank() != 2 || bc.rank() != 1) {
    throw ShapeError("flat_head: want y (c,h,w), Wc (k,n), bc (k)");
  }
  const std::size_t n = y.numel(), k = Wc.dim(0);
  if (Wc.dim(1) != n || bc.dim(0) != k) {
    throw ShapeError("flat_head: Wc " + Wc.shape_str() + " vs y numel " + std::to_string(n));
  }
  Tensor<T> logits({k});
  for (std::size_t t = 0; t < k; ++t) {
    double acc = double(bc[t]);
    const T* wrow = Wc.raw() + t * n;
    const T* v = y.raw();
    for (std::size_t i = 0; i < n; ++i) acc += double(wrow[i]) * double(v[i]);
    logits[t] = static_cast<T>(acc);
  }
  return logits;
}

template <typename T>
Tensor<T> flat_head_vjp(const Tensor<T>& y, const Tensor<T>& Wc,
                        const Tensor<T>& g, HeadGrad<T> acc = {}) {
  const std::size_t n = y.numel(), k = Wc.dim(0);
  Tensor<T> gy(y.shape());
  for (std::size_t t = 0; t < k; ++t) {
    const T gt = g[t];
    const T* wrow = Wc.raw() + t * n;
    T* gv = gy.raw();
    for (std::size_t i = 0; i < n; ++i) gv[i] += wrow[i] * gt;
    if (acc.W) {
      T* gw = acc.W->raw() + t * n;
      const T* v = y.raw();
      for (std::size_t i = 0; i < n; ++i) gw[i] += gt * v[i];
    }
    if (acc.b) (*acc.b)[t] += gt;
  }
  return gy;
}

/// Per-pixel 1x1 projection head; keeps the spatial size.
template <typename T>
Tensor<T> dense_head(const Tensor<T>& y, const ConvKernel<T>& k,
                     const Tensor<T>* bias = nullptr) {
  if (k.k() != 1) throw ShapeError("dense_head kernel must be 1x1");
  return conv2d(y, k, bias);
}

/// Baseline residual step (no leapfrog): y' = W y + f(y, p), with W = I at
/// constant width and W = 0 at width changes.
template <typename T>
Tensor<T> resnet_step(const Tensor<T>& y, const BlockParams<T>& p, bool identity) {
  Tensor<T> out = symmetric_layer(y, p);
  if (identity) axpy(T(1), y, out);
  return out;
}

template <typename T>
Tensor<T> resnet_step_vjp(const Tensor<T>& y, const BlockParams<T>& p, bool identity,
                          const Tensor<T>& g, BlockGrad<T> acc = {}) {
  Tensor<T> gy = symmetric_layer_vjp(y, g, p, acc);
  if (identity) axpy(T(1), g, gy);
  return gy;
}

}  // namespace hypernet
