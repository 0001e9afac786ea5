#pragma once

#include <cstddef>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

/// Cross-correlation weights of shape (c_out, c_in, k, k), k odd.
template <typename T>
struct ConvKernel {
  Tensor<T> weights;

  ConvKernel() = default;
  explicit ConvKernel(Tensor<T> w) : weights(std::move(w)) { validate(); }
  ConvKernel(std::size_t c_out, std::size_t c_in, std::size_t k)
      : weights({c_out, c_in, k, k}) {
    validate();
  }

  std::size_t c_out() const { return weights.dim(0); }
  std::size_t c_in() const { return weights.dim(1); }
  std::size_t k() const { return weights.dim(2); }

  void validate() const {
    if (weights.rank() != 4) {
      throw ShapeError("conv kernel must be rank 4, got " + weights.shape_str());
    }
    const std::size_t kk = weights.dim(2);
    if (kk != weights.dim(3)) {
      throw ShapeError("conv kernel must be square, got " + weights.shape_str());
    }
    if (kk != 1 && kk != 3 && kk != 5) {
      throw ShapeError("conv kernel size must be 1, 3 or 5, got " +
                       std::to_string(kk));
    }
    if (weights.dim(0) < 1 || weights.dim(1) < 1) {
      throw ShapeError("conv kernel needs at least one channel each way");
    }
  }
};

namespace detail {

// Zero-padded copy: (c,h,w) -> contiguous (c, h+2p, w+2p).
template <typename T>
std::vector<T> pad_image(const Tensor<T>& x, std::size_t p) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t hp = h + 2 * p, wp = w + 2 * p;
  std::vector<T> out(c * hp * wp, T(0));
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = x.raw() + (ci * h + i) * w;
      T* dst = out.data() + (ci * hp + i + p) * wp + p;
      for (std::size_t j = 0; j < w; ++j) dst[j] = src[j];
    }
  }
  return out;
}

template <typename T>
void require_chw(const Tensor<T>& x, const char* what) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(what) + " must be rank 3 (c,h,w), got " +
                     x.shape_str());
  }
}

// out[i,j] += sum_{u,v} taps[u*k+v] * pad[(i+u)*wp + j+v], single pass per row.
template <typename T>
void stencil_accumulate(const T* pad, std::size_t wp, const T* taps,
                        std::size_t k, T* out, std::size_t h, std::size_t w) {
  if (k == 3) {
    const T k00 = taps[0], k01 = taps[1], k02 = taps[2];
    const T k10 = taps[3], k11 = taps[4], k12 = taps[5];
    const T k20 = taps[6], k21 = taps[7], k22 = taps[8];
    for (std::size_t i = 0; i < h; ++i) {
      const T* r0 = pad + i * wp;
      const T* r1 = r0 + wp;
      const T* r2 = r1 + wp;
      T* orow = out + i * w;
      for (std::size_t j = 0; j < w; ++j) {
        orow[j] += k00 * r0[j] + k01 * r0[j + 1] + k02 * r0[j + 2] +
                   k10 * r1[j] + k11 * r1[j + 1] + k12 * r1[j + 2] +
                   k20 * r2[j] + k21 * r2[j + 1] + k22 * r2[j + 2];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < h; ++i) {
    T* orow = out + i * w;
    for (std::size_t j = 0; j < w; ++j) {
      T acc = T(0);
      for (std::size_t u = 0; u < k; ++u) {
        const T* row = pad + (i + u) * wp + j;
        for (std::size_t v = 0; v < k; ++v) acc += taps[u * k + v] * row[v];
      }
      orow[j] += acc;
    }
  }
}

}  // namespace detail

/// Same-size cross-correlation with zero padding (k-1)/2 and stride 1.
/// out[o,i,j] = sum_{c,u,v} k[o,c,u,v] * x_pad[c,i+u,j+v] (+ bias[o]).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvKernel<T>& kern,
                 const Tensor<T>* bias = nullptr) {
  detail::require_chw(x, "conv2d input");
  const std::size_t cin = kern.c_in(), cout = kern.c_out(), k = kern.k();
  if (x.dim(0) != cin) {
    throw ShapeError("conv2d channel mismatch: input has " +
                     std::to_string(x.dim(0)) + ", kernel expects " +
                     std::to_string(cin));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) {
    throw ShapeError("conv2d bias must have shape (" + std::to_string(cout) + ")");
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t p = (k - 1) / 2;
  const std::size_t wp = w + 2 * p;

  const std::vector<T> xpad = detail::pad_image(x, p);
  Tensor<T> out({cout, h, w});
  for (std::size_t o = 0; o < cout; ++o) {
    T* outc = out.raw() + o * h * w;
    if (bias) {
      const T b = (*bias)[o];
      for (std::size_t i = 0; i < h * w; ++i) outc[i] = b;
    }
    for (std::size_t c = 0; c < cin; ++c) {
      const T* kslice = kern.weights.raw() + (o * cin + c) * k * k;
      const T* padc = xpad.data() + c * (h + 2 * p) * wp;
      detail::stencil_accumulate(padc, wp, kslice, k, outc, h, w);
    }
  }
  return out;
}

/// Exact adjoint of conv2d without bias:
/// <conv2d(x,k), y> == <x, conv2d_adjoint(y,k)> for all x, y.
template <typename T>
Tensor<T> conv2d_adjoint(const Tensor<T>& y, const ConvKernel<T>& kern) {
  detail::require_chw(y, "conv2d_adjoint input");
  const std::size_t cin = kern.c_in(), cout = kern.c_out(), k = kern.k();
  if (y.dim(0) != cout) {
    throw ShapeError("conv2d_adjoint channel mismatch: input has " +
                     std::to_string(y.dim(0)) + ", kernel outputs " +
                     std::to_string(cout));
  }
  const std::size_t h = y.dim(1), w = y.dim(2);
  const std::size_t p = (k - 1) / 2;
  const std::size_t wp = w + 2 * p;

  // xhat[c,a,b] = sum_{o,u,v} k[o,c,u,v] * ypad[o, a+2p-u, b+2p-v]
  // which is a correlation of the padded y with the flipped kernel.
  const std::vector<T> ypad = detail::pad_image(y, p);
  Tensor<T> out({cin, h, w});
  std::vector<T> flipped(k * k);
  for (std::size_t c = 0; c < cin; ++c) {
    T* outc = out.raw() + c * h * w;
    for (std::size_t o = 0; o < cout; ++o) {
      const T* kslice = kern.weights.raw() + (o * cin + c) * k * k;
      for (std::size_t t = 0; t < k * k; ++t) flipped[t] = kslice[k * k - 1 - t];
      const T* padc = ypad.data() + o * (h + 2 * p) * wp;
      detail::stencil_accumulate(padc, wp, flipped.data(), k, outc, h, w);
    }
  }
  return out;
}

/// Gradient of conv2d output `gy` w.r.t. the kernel, given the forward input.
template <typename T>
Tensor<T> conv2d_kernel_grad(const Tensor<T>& x, const Tensor<T>& gy,
                             const ConvKernel<T>& kern) {
  detail::require_chw(x, "conv2d_kernel_grad input");
  detail::require_chw(gy, "conv2d_kernel_grad cotangent");
  const std::size_t cin = kern.c_in(), cout = kern.c_out(), k = kern.k();
  if (x.dim(0) != cin || gy.dim(0) != cout || x.dim(1) != gy.dim(1) ||
      x.dim(2) != gy.dim(2)) {
    throw ShapeError("conv2d_kernel_grad shape mismatch: x " + x.shape_str() +
                     ", gy " + gy.shape_str());
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t p = (k - 1) / 2;
  const std::size_t wp = w + 2 * p;

  const std::vector<T> xpad = detail::pad_image(x, p);
  Tensor<T> gk({cout, cin, k, k});
  for (std::size_t o = 0; o < cout; ++o) {
    const T* gc = gy.raw() + o * h * w;
    for (std::size_t c = 0; c < cin; ++c) {
      const T* padc = xpad.data() + c * (h + 2 * p) * wp;
      T* gslice = gk.raw() + (o * cin + c) * k * k;
      if (k == 3) {
        double a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0, a20 = 0,
               a21 = 0, a22 = 0;
        for (std::size_t i = 0; i < h; ++i) {
          const T* r0 = padc + i * wp;
          const T* r1 = r0 + wp;
          const T* r2 = r1 + wp;
          const T* grow = gc + i * w;
          for (std::size_t j = 0; j < w; ++j) {
            const double g = double(grow[j]);
            a00 += g * double(r0[j]);
            a01 += g * double(r0[j + 1]);
            a02 += g * double(r0[j + 2]);
            a10 += g * double(r1[j]);
            a11 += g * double(r1[j + 1]);
            a12 += g * double(r1[j + 2]);
            a20 += g * double(r2[j]);
            a21 += g * double(r2[j + 1]);
            a22 += g * double(r2[j + 2]);
          }
        }
        gslice[0] = static_cast<T>(a00);
        gslice[1] = static_cast<T>(a01);
        gslice[2] = static_cast<T>(a02);
        gslice[3] = static_cast<T>(a10);
        gslice[4] = static_cast<T>(a11);
        gslice[5] = static_cast<T>(a12);
        gslice[6] = static_cast<T>(a20);
        gslice[7] = static_cast<T>(a21);
        gslice[8] = static_cast<T>(a22);
        continue;
      }
      for (std::size_t u = 0; u < k; ++u) {
        for (std::size_t v = 0; v < k; ++v) {
          double acc = 0;
          for (std::size_t i = 0; i < h; ++i) {
            const T* row = padc + (i + u) * wp + v;
            const T* grow = gc + i * w;
            for (std::size_t j = 0; j < w; ++j) acc += double(grow[j]) * double(row[j]);
          }
          gslice[u * k + v] = static_cast<T>(acc);
        }
      }
    }
  }
  return gk;
}

/// Gradient of conv2d w.r.t. the bias: per-channel sum of the cotangent.
template <typename T>
Tensor<T> conv2d_bias_grad(const Tensor<T>& gy) {
  detail::require_chw(gy, "conv2d_bias_grad cotangent");
  const std::size_t c = gy.dim(0), hw = gy.dim(1) * gy.dim(2);
  Tensor<T> gb({c});
  for (std::size_t o = 0; o < c; ++o) {
    double acc = 0;
    const T* row = gy.raw() + o * hw;
    for (std::size_t i = 0; i < hw; ++i) acc += double(row[i]);
    gb[o] = static_cast<T>(acc);
  }
  return gb;
}

/// Elementwise max(0, x).
template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* src = x.raw();
  T* dst = out.raw();
  for (std::size_t i = 0; i < x.numel(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

/// VJP of relu with subgradient 0 at the kink: gy masked by x > 0.
template <typename T>
Tensor<T> relu_vjp(const Tensor<T>& x, const Tensor<T>& gy) {
  require_same_shape(x, gy, "relu_vjp");
  Tensor<T> out(x.shape());
  const T* xv = x.raw();
  const T* gv = gy.raw();
  T* dst = out.raw();
  for (std::size_t i = 0; i < x.numel(); ++i) dst[i] = xv[i] > T(0) ? gv[i] : T(0);
  return out;
}

}  // namespace hypernet
