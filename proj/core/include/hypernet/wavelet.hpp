#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hypernet/conv.hpp"
#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

// Single-level orthonormal 2D Haar DWT. Filter entries are +-1/2, so the
// transform preserves the 2-norm and its inverse equals its adjoint.
// Sub-bands of source channel c land in channels [4c+0 .. 4c+3] as
// LL, HL, LH, HH.

template <typename T>
Tensor<T> haar_forward(const Tensor<T>& x) {
  if (x.rank() != 3) {
    throw ShapeError("haar_forward expects (c,h,w), got " + x.shape_str());
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("haar_forward needs even spatial dims, got " + x.shape_str());
  }
  const std::size_t hh = h / 2, hw = w / 2;
  Tensor<T> out({4 * c, hh, hw});
  constexpr T half = T(0.5);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = x.raw() + ci * h * w;
    T* ll = out.raw() + (4 * ci + 0) * hh * hw;
    T* hl = out.raw() + (4 * ci + 1) * hh * hw;
    T* lh = out.raw() + (4 * ci + 2) * hh * hw;
    T* dd = out.raw() + (4 * ci + 3) * hh * hw;
    for (std::size_t i = 0; i < hh; ++i) {
      const T* r0 = src + (2 * i) * w;
      const T* r1 = src + (2 * i + 1) * w;
      for (std::size_t j = 0; j < hw; ++j) {
        const T a = r0[2 * j], b = r0[2 * j + 1];
        const T d = r1[2 * j], e = r1[2 * j + 1];
        const std::size_t o = i * hw + j;
        ll[o] = half * (a + b + d + e);
        hl[o] = half * (a - b + d - e);
        lh[o] = half * (a + b - d - e);
        dd[o] = half * (a - b - d + e);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> haar_inverse(const Tensor<T>& y) {
  if (y.rank() != 3) {
    throw ShapeError("haar_inverse expects (4c,h,w), got " + y.shape_str());
  }
  const std::size_t c4 = y.dim(0), h = y.dim(1), w = y.dim(2);
  if (c4 % 4 != 0) {
    throw ShapeError("haar_inverse needs channels divisible by 4, got " +
                     y.shape_str());
  }
  const std::size_t c = c4 / 4;
  Tensor<T> out({c, 2 * h, 2 * w});
  constexpr T half = T(0.5);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* ll = y.raw() + (4 * ci + 0) * h * w;
    const T* hl = y.raw() + (4 * ci + 1) * h * w;
    const T* lh = y.raw() + (4 * ci + 2) * h * w;
    const T* dd = y.raw() + (4 * ci + 3) * h * w;
    T* dst = out.raw() + ci * 4 * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      T* r0 = dst + (2 * i) * (2 * w);
      T* r1 = dst + (2 * i + 1) * (2 * w);
      for (std::size_t j = 0; j < w; ++j) {
        const std::size_t o = i * w + j;
        const T a = ll[o], b = hl[o], d = lh[o], e = dd[o];
        r0[2 * j] = half * (a + b + d + e);
        r0[2 * j + 1] = half * (a - b + d - e);
        r1[2 * j] = half * (a + b - d - e);
        r1[2 * j + 1] = half * (a - b - d + e);
      }
    }
  }
  return out;
}

/// DWT then a learned 1x1 mix halving the channel count: (c,h,w) -> (2c,h/2,w/2).
template <typename T>
Tensor<T> wavepool(const Tensor<T>& x, const ConvKernel<T>& mix) {
  const Tensor<T> bands = haar_forward(x);
  if (mix.k() != 1 || mix.c_in() != bands.dim(0) ||
      mix.c_out() != 2 * x.dim(0)) {
    throw ShapeError("wavepool mix kernel must be (2c,4c,1,1) for c=" +
                     std::to_string(x.dim(0)) + ", got " +
                     mix.weights.shape_str());
  }
  return conv2d(bands, mix);
}

/// Non-overlapping 2x2 mean: (c,h,w) -> (c,h/2,w/2). Strided-pooling baseline.
template <typename T>
Tensor<T> avgpool2x2(const Tensor<T>& x) {
  if (x.rank() != 3) {
    throw ShapeError("avgpool2x2 expects (c,h,w), got " + x.shape_str());
  }
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avgpool2x2 needs even spatial dims, got " + x.shape_str());
  }
  const std::size_t hh = h / 2, hw = w / 2;
  Tensor<T> out({c, hh, hw});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = x.raw() + ci * h * w;
    T* dst = out.raw() + ci * hh * hw;
    for (std::size_t i = 0; i < hh; ++i) {
      const T* r0 = src + (2 * i) * w;
      const T* r1 = src + (2 * i + 1) * w;
      for (std::size_t j = 0; j < hw; ++j) {
        dst[i * hw + j] =
            T(0.25) * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
      }
    }
  }
  return out;
}

/// VJP of avgpool2x2: spread each cotangent value over its 2x2 source block.
template <typename T>
Tensor<T> avgpool2x2_vjp(const Tensor<T>& gy) {
  if (gy.rank() != 3) {
    throw ShapeError("avgpool2x2_vjp expects (c,h,w), got " + gy.shape_str());
  }
  const std::size_t c = gy.dim(0), hh = gy.dim(1), hw = gy.dim(2);
  Tensor<T> out({c, 2 * hh, 2 * hw});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = gy.raw() + ci * hh * hw;
    T* dst = out.raw() + ci * 4 * hh * hw;
    for (std::size_t i = 0; i < hh; ++i) {
      T* r0 = dst + (2 * i) * (2 * hw);
      T* r1 = dst + (2 * i + 1) * (2 * hw);
      for (std::size_t j = 0; j < hw; ++j) {
        const T g = T(0.25) * src[i * hw + j];
        r0[2 * j] = g;
        r0[2 * j + 1] = g;
        r1[2 * j] = g;
        r1[2 * j + 1] = g;
      }
    }
  }
  return out;
}

inline const char* haar_band_name(std::size_t band) {
  static const char* names[4] = {"LL", "HL", "LH", "HH"};
  return names[band % 4];
}

/// Channels [4c+band] of a HaarStack, gathered into their own tensor.
template <typename T>
Tensor<T> haar_band(const Tensor<T>& stack, std::size_t band) {
  if (stack.rank() != 3 || stack.dim(0) % 4 != 0) {
    throw ShapeError("haar_band expects a (4c,h,w) stack, got " + stack.shape_str());
  }
  if (band > 3) throw ValueError("haar_band index must be 0..3");
  const std::size_t c = stack.dim(0) / 4, h = stack.dim(1), w = stack.dim(2);
  Tensor<T> out({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = stack.raw() + (4 * ci + band) * h * w;
    T* dst = out.raw() + ci * h * w;
    for (std::size_t i = 0; i < h * w; ++i) dst[i] = src[i];
  }
  return out;
}

/// Multi-level pyramid: recursively transforms the LL band. Element i of the
/// result is level i+1's HaarStack with its LL channels already replaced by
/// nothing (the deeper levels continue from it); the last element keeps LL.
/// For reconstruction the stacks are consumed in reverse.
template <typename T>
std::vector<Tensor<T>> dwt_decompose(const Tensor<T>& x, std::size_t levels) {
  if (x.rank() != 3) {
    throw ShapeError("dwt_decompose expects (c,h,w), got " + x.shape_str());
  }
  const std::size_t div = std::size_t(1) << levels;
  if (x.dim(1) % div != 0 || x.dim(2) % div != 0) {
    throw ShapeError("dwt_decompose: dims " + x.shape_str() +
                     " not divisible by 2^" + std::to_string(levels));
  }
  std::vector<Tensor<T>> out;
  Tensor<T> cur = x;
  for (std::size_t l = 0; l < levels; ++l) {
    Tensor<T> stack = haar_forward(cur);
    cur = haar_band(stack, 0);
    out.push_back(std::move(stack));
  }
  return out;
}

/// Inverse of dwt_decompose: rebuilds the original from the pyramid.
template <typename T>
Tensor<T> dwt_reconstruct(const std::vector<Tensor<T>>& pyramid) {
  if (pyramid.empty()) throw ValueError("dwt_reconstruct: empty pyramid");
  Tensor<T> cur = haar_inverse(pyramid.back());
  for (std::size_t l = pyramid.size() - 1; l-- > 0;) {
    Tensor<T> stack = pyramid[l];
    const std::size_t c = stack.dim(0) / 4, h = stack.dim(1), w = stack.dim(2);
    if (cur.dim(0) != c || cur.dim(1) != h || cur.dim(2) != w) {
      throw ShapeError("dwt_reconstruct: level shape mismatch");
    }
    for (std::size_t ci = 0; ci < c; ++ci) {
      T* dst = stack.raw() + 4 * ci * h * w;
      const T* src = cur.raw() + ci * h * w;
      for (std::size_t i = 0; i < h * w; ++i) dst[i] = src[i];
    }
    cur = haar_inverse(stack);
  }
  return cur;
}

}  // namespace hypernet
