#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypernet/blocks.hpp"
#include "hypernet/errors.hpp"
#include "hypernet/losses.hpp"
#include "hypernet/network.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/wavelet.hpp"

namespace hypernet {

/// Logical live-activation accounting: chain states and tape entries only,
/// not per-block temporaries.
struct ActivationMeter {
  std::size_t live = 0;
  std::size_t peak = 0;

  void add(std::size_t bytes) {
    live += bytes;
    if (live > peak) peak = live;
  }
  void sub(std::size_t bytes) { live = bytes > live ? 0 : live - bytes; }
};

template <typename T>
using LossFn = std::function<LossEval<T>(const Tensor<T>&)>;

template <typename T>
struct GradResult {
  double loss = 0;
  Tensor<T> output;
  NetworkParams<T> grads;
  std::size_t peak_activation_bytes = 0;
};

namespace detail {

template <typename T>
void check_block_finite(const Tensor<T>& y, const std::string& name) {
  if (!all_finite(y)) {
    throw NumericError("non-finite state after block " + name);
  }
}

template <typename T>
Tensor<T> apply_head_vjp(const NetworkSpec& spec, const NetworkParams<T>& p,
                         const Tensor<T>& y, const Tensor<T>& g,
                         NetworkParams<T>& grads) {
  if (spec.head == HeadKind::Classifier) {
    HeadGrad<T> acc{&grads.head_W, &grads.head_b};
    return spec.head_pool == HeadPool::Flatten
               ? flat_head_vjp(y, p.head_W, g, acc)
               : classifier_head_vjp(y, p.head_W, g, acc);
  }
  Tensor<T> gk = conv2d_kernel_grad(y, g, p.head_K);
  axpy(T(1), gk, grads.head_K.weights);
  Tensor<T> gb = conv2d_bias_grad(g);
  axpy(T(1), gb, grads.head_b);
  return conv2d_adjoint(g, p.head_K);
}

template <typename T>
double finish_loss(const LossEval<T>& le) {
  if (!std::isfinite(le.value)) throw NumericError("loss is not finite");
  return le.value;
}

template <typename T>
void opening_grads(const NetworkParams<T>& p, const Tensor<T>& x,
                   const Tensor<T>& g_total, NetworkParams<T>& grads) {
  Tensor<T> gk = conv2d_kernel_grad(x, g_total, p.opening_K);
  axpy(T(1), gk, grads.opening_K.weights);
  Tensor<T> gb = conv2d_bias_grad(g_total);
  axpy(T(1), gb, grads.opening_b);
}

template <typename T>
GradResult<T> backprop_resnet(const NetworkSpec& spec, const NetworkParams<T>& p,
                              const Tensor<T>& x, const LossFn<T>& loss_fn) {
  ActivationMeter meter;
  meter.add(x.bytes());
  const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;

  std::vector<Tensor<T>> block_in;   // input of every residual step
  std::vector<Tensor<T>> pool_in;    // input of every pooling layer
  Tensor<T> y = conv2d(x, p.opening_K, &p.opening_b);
  meter.add(y.bytes());
  std::size_t i = 0;
  for (std::size_t l = 0; l < groups; ++l) {
    for (std::size_t b = 0; b < spec.blocks_per_level; ++b, ++i) {
      block_in.push_back(y);
      meter.add(y.bytes());
      y = resnet_step(y, p.blocks[i], true);
      check_block_finite(y, "level" + std::to_string(l) + ".block" + std::to_string(b));
    }
    if (l < p.pool_mix.size()) {
      pool_in.push_back(y);
      meter.add(y.bytes());
      y = spec.baseline_pool == BaselinePool::WavePool
              ? wavepool(y, p.pool_mix[l])
              : conv2d(avgpool2x2(y), p.pool_mix[l]);
    }
  }

  GradResult<T> r;
  r.output = apply_head(spec, p, y);
  const LossEval<T> le = loss_fn(r.output);
  r.loss = finish_loss(le);
  r.grads = zeros_like_params(spec, p);

  Tensor<T> g = apply_head_vjp(spec, p, y, le.grad, r.grads);
  i = p.blocks.size();
  for (std::size_t l = groups; l-- > 0;) {
    if (l < p.pool_mix.size()) {
      const Tensor<T>& pin = pool_in[l];
      if (spec.baseline_pool == BaselinePool::WavePool) {
        Tensor<T> bands = haar_forward(pin);
        Tensor<T> gk = conv2d_kernel_grad(bands, g, p.pool_mix[l]);
        axpy(T(1), gk, r.grads.pool_mix[l].weights);
        g = haar_inverse(conv2d_adjoint(g, p.pool_mix[l]));
      } else {
        Tensor<T> pooled = avgpool2x2(pin);
        Tensor<T> gk = conv2d_kernel_grad(pooled, g, p.pool_mix[l]);
        axpy(T(1), gk, r.grads.pool_mix[l].weights);
        g = avgpool2x2_vjp(conv2d_adjoint(g, p.pool_mix[l]));
      }
    }
    for (std::size_t b = spec.blocks_per_level; b-- > 0;) {
      --i;
      BlockGrad<T> acc{&r.grads.blocks[i].K.weights, &r.grads.blocks[i].b};
      g = resnet_step_vjp(block_in[i], p.blocks[i], true, g, acc);
    }
  }
  opening_grads(p, x, g, r.grads);
  r.peak_activation_bytes = meter.peak;
  return r;
}

}  // namespace detail

/// Reverse mode with full state retention: the tape holds every StatePair,
/// so peak activation memory grows linearly with depth. Gradient oracle.
template <typename T>
GradResult<T> backprop_stored(const NetworkSpec& spec, const NetworkParams<T>& p,
                              const Tensor<T>& x, const LossFn<T>& loss_fn) {
  spec.validate();
  if (spec.arch == Arch::ResNet) return detail::backprop_resnet(spec, p, x, loss_fn);

  ActivationMeter meter;
  meter.add(x.bytes());
  const auto plan = build_plan(spec);
  std::vector<StatePair<T>> states;
  states.reserve(plan.size() + 1);
  states.push_back(opening_layer(x, p.opening_K, p.opening_b));
  meter.add(states.back().bytes());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    states.push_back(leapfrog_step(states.back(), p.blocks[i], plan[i].transform));
    meter.add(states.back().bytes());
    detail::check_block_finite(states.back().y_curr, plan[i].name);
  }

  GradResult<T> r;
  r.output = apply_head(spec, p, states.back().y_curr);
  const LossEval<T> le = loss_fn(r.output);
  r.loss = detail::finish_loss(le);
  r.grads = zeros_like_params(spec, p);

  Tensor<T> g_curr = detail::apply_head_vjp(spec, p, states.back().y_curr, le.grad, r.grads);
  Tensor<T> g_prev(states.back().y_prev.shape());
  for (std::size_t i = plan.size(); i-- > 0;) {
    BlockGrad<T> acc{&r.grads.blocks[i].K.weights, &r.grads.blocks[i].b};
    StatePair<T> g =
        leapfrog_vjp(states[i], p.blocks[i], plan[i].transform, g_prev, g_curr, acc);
    g_prev = std::move(g.y_prev);
    g_curr = std::move(g.y_curr);
  }
  axpy(T(1), g_prev, g_curr);
  detail::opening_grads(p, x, g_curr, r.grads);
  r.peak_activation_bytes = meter.peak;
  return r;
}

/// Memory-free reverse mode: the forward pass keeps only the rolling
/// StatePair; the backward sweep reconstructs each predecessor state via the
/// exact block reversal, then applies that block's VJP. A norm guard aborts
/// if a reconstructed state drifts from the forward pass by more than 1e-3
/// relative.
template <typename T>
GradResult<T> backprop_reversible(const NetworkSpec& spec, const NetworkParams<T>& p,
                                  const Tensor<T>& x, const LossFn<T>& loss_fn) {
  spec.validate();
  if (spec.arch != Arch::Hyper) {
    throw ValueError("reversible backprop requires the hyperbolic architecture");
  }

  ActivationMeter meter;
  meter.add(x.bytes());
  const auto plan = build_plan(spec);
  std::vector<double> fwd_norms(plan.size() + 1);
  StatePair<T> s = opening_layer(x, p.opening_K, p.opening_b);
  meter.add(s.bytes());
  fwd_norms[0] = norm2(s.y_curr);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    StatePair<T> next = leapfrog_step(s, p.blocks[i], plan[i].transform);
    meter.add(next.bytes());
    meter.sub(s.bytes());
    s = std::move(next);
    detail::check_block_finite(s.y_curr, plan[i].name);
    fwd_norms[i + 1] = norm2(s.y_curr);
  }

  GradResult<T> r;
  r.output = apply_head(spec, p, s.y_curr);
  const LossEval<T> le = loss_fn(r.output);
  r.loss = detail::finish_loss(le);
  r.grads = zeros_like_params(spec, p);

  Tensor<T> g_curr = detail::apply_head_vjp(spec, p, s.y_curr, le.grad, r.grads);
  Tensor<T> g_prev(s.y_prev.shape());
  for (std::size_t i = plan.size(); i-- > 0;) {
    StatePair<T> prev = leapfrog_reverse(s, p.blocks[i], plan[i].transform);
    meter.add(prev.bytes());
    const double got = norm2(prev.y_curr);
    const double want = fwd_norms[i];
    if (std::abs(got - want) > 1e-3 * (want + 1e-30)) {
      throw NumericError("state reconstruction diverged at " + plan[i].name +
                         ": |y| went " + std::to_string(want) + " -> " +
                         std::to_string(got));
    }
    BlockGrad<T> acc{&r.grads.blocks[i].K.weights, &r.grads.blocks[i].b};
    StatePair<T> g =
        leapfrog_vjp(prev, p.blocks[i], plan[i].transform, g_prev, g_curr, acc);
    g_prev = std::move(g.y_prev);
    g_curr = std::move(g.y_curr);
    meter.sub(s.bytes());
    s = std::move(prev);
  }
  axpy(T(1), g_prev, g_curr);
  detail::opening_grads(p, x, g_curr, r.grads);
  r.peak_activation_bytes = meter.peak;
  return r;
}

template <typename T>
GradResult<T> backprop(const NetworkSpec& spec, const NetworkParams<T>& p,
                       const Tensor<T>& x, const LossFn<T>& loss_fn) {
  return spec.mode == GradMode::Reversible ? backprop_reversible(spec, p, x, loss_fn)
                                           : backprop_stored(spec, p, x, loss_fn);
}

namespace detail {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

template <typename T>
void hash_relu_signs(const Tensor<T>& z, std::uint64_t& h) {
  for (std::size_t i = 0; i < z.numel(); ++i) {
    h ^= z[i] > T(0) ? 0x9eu : 0x51u;
    h *= kFnvPrime;
  }
}

template <typename T>
Tensor<T> symmetric_layer_hashed(const Tensor<T>& y, const BlockParams<T>& p,
                                 std::uint64_t& h) {
  Tensor<T> z = conv2d(y, p.K, &p.b);
  hash_relu_signs(z, h);
  Tensor<T> out = conv2d_adjoint(relu(z), p.K);
  T* v = out.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) v[i] = -v[i];
  return out;
}

// Forward + loss that also fingerprints every ReLU activation pattern, so the
// finite-difference probe can detect when a perturbation crosses a kink.
template <typename T>
double fd_loss(const NetworkSpec& spec, const NetworkParams<T>& p, const Tensor<T>& x,
               const LossFn<T>& loss_fn, std::uint64_t& mask_hash) {
  mask_hash = kFnvOffset;
  Tensor<T> pre_head;
  if (spec.arch == Arch::ResNet) {
    Tensor<T> y = conv2d(x, p.opening_K, &p.opening_b);
    const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;
    std::size_t i = 0;
    for (std::size_t l = 0; l < groups; ++l) {
      for (std::size_t b = 0; b < spec.blocks_per_level; ++b, ++i) {
        Tensor<T> f = symmetric_layer_hashed(y, p.blocks[i], mask_hash);
        axpy(T(1), y, f);
        y = std::move(f);
      }
      if (l < p.pool_mix.size()) {
        y = spec.baseline_pool == BaselinePool::WavePool
                ? wavepool(y, p.pool_mix[l])
                : conv2d(avgpool2x2(y), p.pool_mix[l]);
      }
    }
    pre_head = std::move(y);
  } else {
    StatePair<T> s = opening_layer(x, p.opening_K, p.opening_b);
    const auto plan = build_plan(spec);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      Tensor<T> tp = apply_transform(s.y_prev, plan[i].transform);
      Tensor<T> tc = apply_transform(s.y_curr, plan[i].transform);
      Tensor<T> next = symmetric_layer_hashed(tc, p.blocks[i], mask_hash);
      T* nv = next.raw();
      const T* cv = tc.raw();
      const T* pv = tp.raw();
      for (std::size_t j = 0; j < next.numel(); ++j) nv[j] += T(2) * cv[j] - pv[j];
      s = StatePair<T>(std::move(tc), std::move(next),
                       s.level + level_delta(plan[i].transform));
    }
    pre_head = s.y_curr;
  }
  return loss_fn(apply_head(spec, p, pre_head)).value;
}

}  // namespace detail

/// Coordinate status from the finite-difference probe.
enum class FdStatus : int { Skipped = -1, KinkExcluded = 0, Valid = 1 };

template <typename T>
struct FdResult {
  NetworkParams<T> grads;
  NetworkParams<T> status;  // per coordinate: -1 skipped, 0 kink-excluded, 1 valid
};

/// Central differences (L(w+h) - L(w-h)) / 2h per parameter coordinate.
/// A coordinate whose two probe passes activate different ReLU patterns is
/// marked kink-excluded instead of compared. With max_coords_per_tensor > 0
/// only that many coordinates per tensor are probed (sampled via rng),
/// keeping large nets tractable; unprobed coordinates are marked skipped.
template <typename T>
FdResult<T> finite_diff_grad(const NetworkSpec& spec, const NetworkParams<T>& params,
                             const Tensor<T>& x, const LossFn<T>& loss_fn, double h,
                             std::size_t max_coords_per_tensor = 0, Rng* rng = nullptr) {
  if (!(h > 0)) throw ValueError("finite difference step must be > 0");
  spec.validate();
  FdResult<T> r;
  r.grads = zeros_like_params(spec, params);
  r.status = zeros_like_params(spec, params);
  for_each_param(spec, r.status, [&](const std::string&, Tensor<T>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = T(-1);
  });

  NetworkParams<T> work = params;

  std::vector<Tensor<T>*> work_tensors, grad_tensors, status_tensors;
  for_each_param(spec, work, [&](const std::string&, Tensor<T>& t) { work_tensors.push_back(&t); });
  for_each_param(spec, r.grads, [&](const std::string&, Tensor<T>& t) { grad_tensors.push_back(&t); });
  for_each_param(spec, r.status, [&](const std::string&, Tensor<T>& t) { status_tensors.push_back(&t); });

  for (std::size_t ti = 0; ti < work_tensors.size(); ++ti) {
    Tensor<T>& t = *work_tensors[ti];
    std::vector<std::size_t> coords;
    if (max_coords_per_tensor == 0 || t.numel() <= max_coords_per_tensor) {
      coords.resize(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) coords[i] = i;
    } else {
      std::vector<std::size_t> all(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) all[i] = i;
      if (rng) rng->shuffle(all.begin(), all.end());
      coords.assign(all.begin(), all.begin() + max_coords_per_tensor);
    }
    for (std::size_t i : coords) {
      const T saved = t[i];
      std::uint64_t hash_plus = 0, hash_minus = 0;
      t[i] = static_cast<T>(double(saved) + h);
      const double lp = detail::fd_loss(spec, work, x, loss_fn, hash_plus);
      t[i] = static_cast<T>(double(saved) - h);
      const double lm = detail::fd_loss(spec, work, x, loss_fn, hash_minus);
      t[i] = saved;
      (*grad_tensors[ti])[i] = static_cast<T>((lp - lm) / (2.0 * h));
      (*status_tensors[ti])[i] = hash_plus == hash_minus ? T(1) : T(0);
    }
  }
  return r;
}

/// Least-squares R^2 of y against x; 1 means perfectly linear.
inline double linear_r2(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 2) throw ValueError("linear_r2 needs matched n >= 2");
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / double(n), my = sy / double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (syy == 0) return 1.0;
  if (sxx == 0) return 0.0;
  const double slope = sxy / sxx;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = my + slope * (xs[i] - mx);
    ss_res += (ys[i] - fit) * (ys[i] - fit);
  }
  return 1.0 - ss_res / syy;
}

struct MemoryRow {
  std::size_t depth = 0;
  GradMode mode = GradMode::Reversible;
  std::size_t peak_bytes = 0;
};

/// Peak live-activation bytes of one backprop run at the given chain depth.
/// The probe net uses one coarsening level with `depth` blocks, so every
/// StatePair has identical size and the stored-mode curve is exactly affine.
template <typename T>
MemoryRow measure_peak_bytes(std::size_t depth, GradMode mode, std::uint64_t seed) {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = depth;
  spec.classes = 4;
  spec.head = HeadKind::Classifier;
  spec.mode = mode;
  Rng rng(seed);
  const std::size_t h = 16, w = 16;
  NetworkParams<T> params = init_params<T>(spec, h, w, rng);
  Tensor<T> x = random_uniform<T>({1, h, w}, rng, -1.0, 1.0);
  Tensor<T> target({1});
  LossFn<T> loss = [&](const Tensor<T>& out) {
    return weighted_cross_entropy(out, target, Tensor<T>());
  };
  const GradResult<T> r = backprop(spec, params, x, loss);
  return MemoryRow{depth, mode, r.peak_activation_bytes};
}

}  // namespace hypernet
