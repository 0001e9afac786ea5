#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

template <typename T>
struct LossEval {
  double value = 0;
  Tensor<T> grad;  // d value / d prediction, same shape as the prediction
};

namespace detail {

template <typename T>
inline std::size_t label_at(const Tensor<T>& labels, std::size_t idx,
                            std::size_t classes) {
  const double v = double(labels[idx]);
  const long long l = static_cast<long long>(std::llround(v));
  if (l < 0 || std::size_t(l) >= classes || std::abs(v - double(l)) > 1e-6) {
    throw DataError("label " + std::to_string(v) + " outside [0, " +
                    std::to_string(classes) + ")");
  }
  return std::size_t(l);
}

}  // namespace detail

/// Mean over pixels of w_t * (-log softmax(logits)_t). `logits` is (k) with a
/// single label, or (k,h,w) with an (h,w) label map. Stabilized by
/// max-subtraction. Pass an empty `weights` for unweighted CE.
template <typename T>
LossEval<T> weighted_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels,
                                   const Tensor<T>& weights) {
  std::size_t k, npix;
  if (logits.rank() == 1) {
    k = logits.dim(0);
    npix = 1;
    if (labels.numel() != 1) {
      throw ShapeError("vector logits need a single label, got " + labels.shape_str());
    }
  } else if (logits.rank() == 3) {
    k = logits.dim(0);
    npix = logits.dim(1) * logits.dim(2);
    if (labels.numel() != npix) {
      throw ShapeError("label map " + labels.shape_str() + " does not cover logits " +
                       logits.shape_str());
    }
  } else {
    throw ShapeError("cross entropy wants (k) or (k,h,w) logits, got " +
                     logits.shape_str());
  }
  if (!weights.empty() && (weights.rank() != 1 || weights.dim(0) != k)) {
    throw ShapeError("class weights must have shape (" + std::to_string(k) + ")");
  }

  LossEval<T> out;
  out.grad = Tensor<T>(logits.shape());
  double total = 0;
  std::vector<double> p(k);
  for (std::size_t pix = 0; pix < npix; ++pix) {
    double maxv = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      maxv = std::max(maxv, double(logits[c * npix + pix]));
    }
    double z = 0;
    for (std::size_t c = 0; c < k; ++c) {
      p[c] = std::exp(double(logits[c * npix + pix]) - maxv);
      z += p[c];
    }
    const std::size_t t = detail::label_at(labels, pix, k);
    const double w = weights.empty() ? 1.0 : double(weights[t]);
    total += w * (std::log(z) - (double(logits[t * npix + pix]) - maxv));
    const double scale = w / double(npix);
    for (std::size_t c = 0; c < k; ++c) {
      out.grad[c * npix + pix] = static_cast<T>(scale * (p[c] / z - (c == t ? 1.0 : 0.0)));
    }
  }
  out.value = total / double(npix);
  return out;
}

/// w_c = (mean frequency over present classes) / freq_c; absent classes get 0.
template <typename T>
Tensor<T> mean_frequency_weights(const std::vector<std::size_t>& histogram) {
  const std::size_t k = histogram.size();
  if (k == 0) throw ValueError("empty label histogram");
  std::size_t total = 0, present = 0;
  for (std::size_t c : histogram) {
    total += c;
    if (c > 0) ++present;
  }
  if (present == 0) throw ValueError("histogram has no labels");
  double mean_freq = 0;
  for (std::size_t c : histogram) {
    if (c > 0) mean_freq += double(c) / double(total);
  }
  mean_freq /= double(present);
  Tensor<T> w({k});
  for (std::size_t c = 0; c < k; ++c) {
    w[c] = histogram[c] == 0
               ? T(0)
               : static_cast<T>(mean_freq / (double(histogram[c]) / double(total)));
  }
  return w;
}

/// Mean squared error; grad = 2 (pred - target) / N.
template <typename T>
LossEval<T> l2_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred, target, "l2_loss");
  LossEval<T> out;
  out.grad = Tensor<T>(pred.shape());
  const std::size_t n = pred.numel();
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(pred[i]) - double(target[i]);
    acc += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / double(n));
  }
  out.value = acc / double(n);
  return out;
}

}  // namespace hypernet
