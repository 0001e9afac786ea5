#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/rng.hpp"

namespace hypernet {

/// Dense N-dimensional array, row-major contiguous. The universal value type
/// of the library; ops treat tensors as immutable values once produced.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor holds f32 or f64");

 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), T(0));
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape product " +
                       std::to_string(checked_numel(shape_)));
    }
  }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// 3-d accessor for (c, h, w) tensors; hot loops use raw() instead.
  T& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  const T& at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const T& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  /// Same data, new shape; element counts must agree.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (checked_numel(shape) != numel()) {
      throw ShapeError("reshape changes element count");
    }
    return Tensor(std::move(shape), data_);
  }

  std::size_t bytes() const { return numel() * sizeof(T); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive");
      if (d != 0 && n > static_cast<std::size_t>(-1) / d) {
        throw ShapeError("tensor shape overflows size_t");
      }
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

/// Throws NumericError if any value is NaN or Inf; `context` names the op or
/// block for the diagnostic.
template <typename T>
void check_finite(const Tensor<T>& t, const std::string& context) {
  for (const T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("non-finite value in " + context);
    }
  }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const T v : t.data()) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

// ---- small arithmetic helpers (single pass, no broadcasting) ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const T* pa = a.raw();
  const T* pb = b.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  return out;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const T* pa = a.raw();
  T* po = out.raw();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = s * pa[i];
  return out;
}

/// y += s * x
template <typename T>
void axpy(T s, const Tensor<T>& x, Tensor<T>& y) {
  require_same_shape(x, y, "axpy");
  const T* px = x.raw();
  T* py = y.raw();
  for (std::size_t i = 0; i < y.numel(); ++i) py[i] += s * px[i];
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  const T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < a.numel(); ++i) {
    acc += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
  }
  return acc;
}

template <typename T>
double squared_norm(const Tensor<T>& t) {
  double acc = 0.0;
  for (const T v : t.data()) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename T>
double norm2(const Tensor<T>& t) {
  return std::sqrt(squared_norm(t));
}

template <typename T>
double max_abs(const Tensor<T>& t) {
  double m = 0.0;
  for (const T v : t.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  const T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(pa[i]) - static_cast<double>(pb[i])));
  }
  return m;
}

/// max |a-b| / (max |b| + eps); the usual relative deviation for comparing a
/// tensor against a reference.
template <typename T>
double rel_deviation(const Tensor<T>& a, const Tensor<T>& ref) {
  return max_abs_diff(a, ref) / (max_abs(ref) + 1e-300);
}

template <typename T>
Tensor<T> random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace hypernet
