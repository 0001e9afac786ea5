#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hypernet/blocks.hpp"
#include "hypernet/conv.hpp"
#include "hypernet/errors.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/wavelet.hpp"

namespace hypernet {

enum class Topology { DownOnly, DownUp };
enum class HeadKind { Classifier, Segmenter, Regressor };
enum class HeadPool { GlobalAvg, Flatten };
enum class Arch { Hyper, ResNet };
enum class BaselinePool { WavePool, StridedAvg };
enum class GradMode { Reversible, Stored };

struct NetworkSpec {
  std::size_t input_channels = 3;
  std::size_t opening_width = 4;
  std::size_t levels = 0;
  std::size_t blocks_per_level = 1;
  std::size_t classes = 10;
  HeadKind head = HeadKind::Classifier;
  HeadPool head_pool = HeadPool::GlobalAvg;
  Topology topology = Topology::DownOnly;
  GradMode mode = GradMode::Reversible;
  Arch arch = Arch::Hyper;
  BaselinePool baseline_pool = BaselinePool::WavePool;

  void validate() const {
    if (input_channels < 1) throw ValueError("input_channels must be >= 1");
    if (opening_width < 1) throw ValueError("opening_width must be >= 1");
    if (blocks_per_level < 1) throw ValueError("blocks_per_level must be >= 1");
    if (head != HeadKind::Regressor && classes < 2) {
      throw ValueError("classes must be >= 2");
    }
    if (arch == Arch::ResNet) {
      if (topology != Topology::DownOnly) {
        throw ValueError("baseline arch supports the down-only topology only");
      }
      if (mode != GradMode::Stored) {
        throw ValueError("baseline arch is not reversible; use stored mode");
      }
    }
    if (topology == Topology::DownUp && head == HeadKind::Classifier &&
        head_pool == HeadPool::Flatten) {
      throw ValueError("flatten head on the down-up topology is unsupported");
    }
  }

  std::size_t head_classes() const {
    return head == HeadKind::Regressor ? 1 : classes;
  }

  /// Channel width of the pre-head state.
  std::size_t final_width() const {
    if (arch == Arch::ResNet) return opening_width << levels;
    if (topology == Topology::DownUp) return opening_width;
    std::size_t w = opening_width;
    for (std::size_t l = 0; l < levels; ++l) w *= 4;
    return w;
  }

  std::size_t chain_blocks() const {
    const std::size_t groups = levels == 0 ? 1 : levels;
    const std::size_t down = groups * blocks_per_level;
    return topology == Topology::DownUp ? 2 * down : down;
  }
};

/// One chain block in execution order: which transform it applies, the channel
/// width its symmetric layer sees (post-transform), and its checkpoint name.
struct PlanEntry {
  StepTransform transform = StepTransform::None;
  std::size_t width = 0;
  std::string name;
};

inline std::vector<PlanEntry> build_plan(const NetworkSpec& spec) {
  spec.validate();
  std::vector<PlanEntry> plan;
  const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;
  std::size_t w = spec.opening_width;
  for (std::size_t l = 0; l < groups; ++l) {
    for (std::size_t b = 0; b < spec.blocks_per_level; ++b) {
      const bool coarsen = spec.levels > 0 && b + 1 == spec.blocks_per_level;
      PlanEntry e;
      e.transform = coarsen ? StepTransform::Coarsen : StepTransform::None;
      if (coarsen) w *= 4;
      e.width = w;
      e.name = "level" + std::to_string(l) + ".block" + std::to_string(b);
      plan.push_back(std::move(e));
    }
  }
  if (spec.topology == Topology::DownUp) {
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t b = 0; b < spec.blocks_per_level; ++b) {
        const bool refine = spec.levels > 0 && b == 0;
        PlanEntry e;
        e.transform = refine ? StepTransform::Refine : StepTransform::None;
        if (refine) w /= 4;
        e.width = w;
        e.name = "up" + std::to_string(g) + ".block" + std::to_string(b);
        plan.push_back(std::move(e));
      }
    }
  }
  return plan;
}

template <typename T>
struct NetworkParams {
  ConvKernel<T> opening_K;
  Tensor<T> opening_b;
  std::vector<BlockParams<T>> blocks;
  std::vector<ConvKernel<T>> pool_mix;  // baseline arch only, one per level
  Tensor<T> head_W;                     // affine heads: (k, c) or (k, c*h*w)
  Tensor<T> head_b;
  ConvKernel<T> head_K;                 // dense heads: (k_out, c, 1, 1)
};

namespace detail {

template <typename T>
Tensor<T> init_kernel(std::size_t c_out, std::size_t c_in, std::size_t k, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(c_in * k * k));
  return random_uniform<T>({c_out, c_in, k, k}, rng, -bound, bound);
}

template <typename T>
Tensor<T> init_affine(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(cols));
  return random_uniform<T>({rows, cols}, rng, -bound, bound);
}

}  // namespace detail

/// Fresh parameters for `spec` on inputs of spatial size (h, w). Kernels draw
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases start at zero. Draw order
/// is fixed: opening, chain blocks in execution order (baseline pool mixes
/// after their level), head last.
template <typename T>
NetworkParams<T> init_params(const NetworkSpec& spec, std::size_t h, std::size_t w,
                             Rng& rng) {
  spec.validate();
  const std::size_t div = std::size_t(1) << spec.levels;
  if (h % div != 0 || w % div != 0) {
    throw ValueError("input " + std::to_string(h) + "x" + std::to_string(w) +
                     " not divisible by 2^" + std::to_string(spec.levels));
  }
  NetworkParams<T> p;
  p.opening_K = ConvKernel<T>(
      detail::init_kernel<T>(spec.opening_width, spec.input_channels, 3, rng));
  p.opening_b = Tensor<T>({spec.opening_width});

  if (spec.arch == Arch::Hyper) {
    for (const PlanEntry& e : build_plan(spec)) {
      ConvKernel<T> k(detail::init_kernel<T>(e.width, e.width, 3, rng));
      p.blocks.emplace_back(std::move(k), Tensor<T>({e.width}));
    }
  } else {
    std::size_t cw = spec.opening_width;
    const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;
    for (std::size_t l = 0; l < groups; ++l) {
      for (std::size_t b = 0; b < spec.blocks_per_level; ++b) {
        ConvKernel<T> k(detail::init_kernel<T>(cw, cw, 3, rng));
        p.blocks.emplace_back(std::move(k), Tensor<T>({cw}));
      }
      if (l < spec.levels) {
        const std::size_t mix_in =
            spec.baseline_pool == BaselinePool::WavePool ? 4 * cw : cw;
        p.pool_mix.emplace_back(detail::init_kernel<T>(2 * cw, mix_in, 1, rng));
        cw *= 2;
      }
    }
  }

  const std::size_t c_head = spec.final_width();
  const std::size_t k_out = spec.head_classes();
  if (spec.head == HeadKind::Classifier) {
    const std::size_t feat =
        spec.head_pool == HeadPool::Flatten
            ? c_head * (h >> spec.levels) * (w >> spec.levels)
            : c_head;
    p.head_W = detail::init_affine<T>(k_out, feat, rng);
    p.head_b = Tensor<T>({k_out});
  } else {
    p.head_K = ConvKernel<T>(detail::init_kernel<T>(k_out, c_head, 1, rng));
    p.head_b = Tensor<T>({k_out});
  }
  return p;
}

/// Visits every parameter tensor in the fixed checkpoint order with
/// f(name, tensor&). Optimizers and serialization both iterate through this,
/// so update order and file order stay identical.
template <typename T, typename F>
void for_each_param(const NetworkSpec& spec, NetworkParams<T>& p, F&& f) {
  f("opening.K", p.opening_K.weights);
  f("opening.b", p.opening_b);
  if (spec.arch == Arch::Hyper) {
    const auto plan = build_plan(spec);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      f(plan[i].name + ".K", p.blocks[i].K.weights);
      f(plan[i].name + ".b", p.blocks[i].b);
    }
  } else {
    const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;
    std::size_t i = 0;
    for (std::size_t l = 0; l < groups; ++l) {
      for (std::size_t b = 0; b < spec.blocks_per_level; ++b, ++i) {
        const std::string base = "level" + std::to_string(l) + ".block" + std::to_string(b);
        f(base + ".K", p.blocks[i].K.weights);
        f(base + ".b", p.blocks[i].b);
      }
      if (l < p.pool_mix.size()) {
        f("level" + std::to_string(l) + ".pool.K", p.pool_mix[l].weights);
      }
    }
  }
  if (spec.head == HeadKind::Classifier) {
    f("head.W", p.head_W);
    f("head.b", p.head_b);
  } else {
    f("head.K", p.head_K.weights);
    f("head.b", p.head_b);
  }
}

template <typename T, typename F>
void for_each_param(const NetworkSpec& spec, const NetworkParams<T>& p, F&& f) {
  for_each_param(spec, const_cast<NetworkParams<T>&>(p),
                 [&](const std::string& name, Tensor<T>& t) {
                   f(name, static_cast<const Tensor<T>&>(t));
                 });
}

template <typename T>
std::size_t parameter_count(const NetworkSpec& spec, const NetworkParams<T>& p) {
  std::size_t n = 0;
  for_each_param(spec, p, [&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
  return n;
}

/// Zero-filled gradient (or optimizer-state) container shaped like `p`.
template <typename T>
NetworkParams<T> zeros_like_params(const NetworkSpec& spec, const NetworkParams<T>& p) {
  NetworkParams<T> g;
  g.opening_K = ConvKernel<T>(Tensor<T>(p.opening_K.weights.shape()));
  g.opening_b = Tensor<T>(p.opening_b.shape());
  for (const auto& bp : p.blocks) {
    g.blocks.emplace_back(ConvKernel<T>(Tensor<T>(bp.K.weights.shape())),
                          Tensor<T>(bp.b.shape()));
  }
  for (const auto& m : p.pool_mix) {
    g.pool_mix.emplace_back(Tensor<T>(m.weights.shape()));
  }
  if (!p.head_W.empty()) g.head_W = Tensor<T>(p.head_W.shape());
  if (!p.head_b.empty()) g.head_b = Tensor<T>(p.head_b.shape());
  if (!p.head_K.weights.empty()) g.head_K = ConvKernel<T>(Tensor<T>(p.head_K.weights.shape()));
  return g;
}

template <typename T>
Tensor<T> apply_head(const NetworkSpec& spec, const NetworkParams<T>& p,
                     const Tensor<T>& y) {
  if (spec.head == HeadKind::Classifier) {
    return spec.head_pool == HeadPool::Flatten ? flat_head(y, p.head_W, p.head_b)
                                               : classifier_head(y, p.head_W, p.head_b);
  }
  return dense_head(y, p.head_K, &p.head_b);
}

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  StatePair<T> final_state;
};

/// Inference pass keeping only the rolling StatePair (plus the baseline arch's
/// single tensor). Gradient engines with state retention live in grad.hpp.
template <typename T>
ForwardResult<T> forward_network(const NetworkSpec& spec, const NetworkParams<T>& p,
                                 const Tensor<T>& x) {
  spec.validate();
  if (x.rank() != 3 || x.dim(0) != spec.input_channels) {
    throw ShapeError("network input must be (" + std::to_string(spec.input_channels) +
                     ",h,w), got " + x.shape_str());
  }
  const std::size_t div = std::size_t(1) << spec.levels;
  if (x.dim(1) % div != 0 || x.dim(2) % div != 0) {
    throw ShapeError("input " + x.shape_str() + " not divisible by 2^" +
                     std::to_string(spec.levels));
  }

  if (spec.arch == Arch::ResNet) {
    Tensor<T> y = conv2d(x, p.opening_K, &p.opening_b);
    const std::size_t groups = spec.levels == 0 ? 1 : spec.levels;
    std::size_t i = 0;
    for (std::size_t l = 0; l < groups; ++l) {
      for (std::size_t b = 0; b < spec.blocks_per_level; ++b, ++i) {
        y = resnet_step(y, p.blocks[i], true);
      }
      if (l < p.pool_mix.size()) {
        y = spec.baseline_pool == BaselinePool::WavePool
                ? wavepool(y, p.pool_mix[l])
                : conv2d(avgpool2x2(y), p.pool_mix[l]);
      }
    }
    ForwardResult<T> r;
    r.output = apply_head(spec, p, y);
    Tensor<T> y2 = y;
    r.final_state = StatePair<T>(std::move(y2), std::move(y), int(spec.levels));
    return r;
  }

  StatePair<T> s = opening_layer(x, p.opening_K, p.opening_b);
  const auto plan = build_plan(spec);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    s = leapfrog_step(s, p.blocks[i], plan[i].transform);
  }
  ForwardResult<T> r;
  r.output = apply_head(spec, p, s.y_curr);
  r.final_state = std::move(s);
  return r;
}

}  // namespace hypernet
