#pragma once

#include <cstddef>
#include <vector>

#include "hypernet/errors.hpp"
#include "hypernet/tensor.hpp"

namespace hypernet {

struct Metrics {
  double global_accuracy = 0;
  double class_average = 0;
};

/// Running confusion counts; feed predictions, read both accuracy metrics.
/// Class average is the mean recall over classes that appear in the truth.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::size_t classes)
      : correct_(classes, 0), total_(classes, 0) {}

  void add(std::size_t predicted, std::size_t truth) {
    if (truth >= total_.size() || predicted >= total_.size()) {
      throw ValueError("class index out of range in metrics");
    }
    ++total_[truth];
    if (predicted == truth) ++correct_[truth];
  }

  Metrics result() const {
    Metrics m;
    std::size_t correct = 0, total = 0, present = 0;
    double recall_sum = 0;
    for (std::size_t c = 0; c < total_.size(); ++c) {
      correct += correct_[c];
      total += total_[c];
      if (total_[c] > 0) {
        ++present;
        recall_sum += double(correct_[c]) / double(total_[c]);
      }
    }
    m.global_accuracy = total == 0 ? 0 : double(correct) / double(total);
    m.class_average = present == 0 ? 0 : recall_sum / double(present);
    return m;
  }

 private:
  std::vector<std::size_t> correct_;
  std::vector<std::size_t> total_;
};

/// Argmax over the class axis of (k) logits.
template <typename T>
std::size_t argmax_class(const Tensor<T>& logits) {
  if (logits.rank() != 1 || logits.numel() == 0) {
    throw ShapeError("argmax_class wants nonempty (k) logits");
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.dim(0); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

/// Per-pixel argmax of a (k,h,w) map into class indices of length h*w.
template <typename T>
std::vector<std::size_t> argmax_map(const Tensor<T>& logits) {
  if (logits.rank() != 3) {
    throw ShapeError("argmax_map wants (k,h,w) logits, got " + logits.shape_str());
  }
  const std::size_t k = logits.dim(0), npix = logits.dim(1) * logits.dim(2);
  std::vector<std::size_t> out(npix, 0);
  for (std::size_t pix = 0; pix < npix; ++pix) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[c * npix + pix] > logits[best * npix + pix]) best = c;
    }
    out[pix] = best;
  }
  return out;
}

}  // namespace hypernet
