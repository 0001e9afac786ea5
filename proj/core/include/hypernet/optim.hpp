#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

/// g <- grad + weight_decay * param; v <- momentum * v + g; param <- param - lr * v.
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity,
              double lr, double momentum, double weight_decay) {
  require_same_shape(param, grad, "sgd_step");
  require_same_shape(param, velocity, "sgd_step velocity");
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = double(grad[i]) + weight_decay * double(param[i]);
    const double v = momentum * double(velocity[i]) + g;
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(double(param[i]) - lr * v);
  }
}

/// Bias-corrected Adam update; t is the 1-based step counter.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
               double lr, double beta1, double beta2, double eps, std::size_t t) {
  require_same_shape(param, grad, "adam_step");
  require_same_shape(param, m, "adam_step m");
  require_same_shape(param, v, "adam_step v");
  if (t < 1) throw ValueError("adam step counter must be >= 1");
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = double(grad[i]);
    const double mi = beta1 * double(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * double(v[i]) + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(double(param[i]) -
                              lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
  }
}

/// Step decay lr0 * factor^floor(epoch/period), or the milestone form
/// lr0 * factor^(number of milestones <= epoch) when milestones are set.
struct StepSchedule {
  double lr0 = 0.1;
  std::size_t period = 0;  // 0 disables periodic decay
  std::vector<std::size_t> milestones;
  double factor = 0.1;
};

inline double lr_at(const StepSchedule& s, std::size_t epoch) {
  if (!s.milestones.empty()) {
    std::size_t hits = 0;
    for (std::size_t m : s.milestones) {
      if (epoch >= m) ++hits;
    }
    return s.lr0 * std::pow(s.factor, double(hits));
  }
  if (s.period == 0) return s.lr0;
  return s.lr0 * std::pow(s.factor, double(epoch / s.period));
}

}  // namespace hypernet
