#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hypernet/checkpoint.hpp"
#include "hypernet/grad.hpp"
#include "hypernet/losses.hpp"
#include "hypernet/manifest.hpp"
#include "hypernet/metrics.hpp"
#include "hypernet/network.hpp"
#include "hypernet/optim.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor_io.hpp"

namespace hypernet {

enum class LossKind { CrossEntropy, L2 };
enum class Weighting { None, MeanFrequency };
enum class OptKind { Sgd, Adam };

struct TrainConfig {
  OptKind optimizer = OptKind::Sgd;
  double lr = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  StepSchedule schedule;  // schedule.lr0 is kept equal to lr
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  LossKind loss = LossKind::CrossEntropy;
  Weighting weighting = Weighting::None;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::string out_dir;               // empty disables checkpoint writing

  /// Boundary validation for user-supplied configs. The loop itself tolerates
  /// degenerate values (lr = 0 trains without moving), but configured runs
  /// must be sane.
  void validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
    if (!(schedule.factor > 0)) throw ConfigError("schedule factor must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  }
};

template <typename T>
struct Sample {
  Tensor<T> input;
  Tensor<T> target;
};

template <typename T>
struct Dataset {
  TaskKind task = TaskKind::Classification;
  std::size_t classes = 0;
  std::vector<Sample<T>> samples;
};

inline TaskKind task_for_head(HeadKind h) {
  switch (h) {
    case HeadKind::Classifier: return TaskKind::Classification;
    case HeadKind::Segmenter: return TaskKind::Segmentation;
    default: return TaskKind::Regression;
  }
}

template <typename T>
Dataset<T> load_dataset(const std::string& manifest_path, TaskKind task,
                        std::size_t classes) {
  Dataset<T> ds;
  ds.task = task;
  ds.classes = classes;
  for (const ManifestEntry& e : load_manifest(manifest_path)) {
    Sample<T> s;
    try {
      s.input = read_tensor<T>(e.input_path);
      s.target = read_tensor<T>(e.target_path);
    } catch (const IoError& err) {
      throw DataError(std::string("bad dataset tensor: ") + err.what());
    }
    if (s.input.rank() != 3) {
      throw DataError("dataset input " + e.input_path + " must be (c,h,w), got " +
                      s.input.shape_str());
    }
    if (!ds.samples.empty() && !s.input.same_shape(ds.samples.front().input)) {
      throw DataError("dataset input shapes differ: " + e.input_path);
    }
    const std::size_t h = s.input.dim(1), w = s.input.dim(2);
    switch (task) {
      case TaskKind::Classification: {
        if (s.target.numel() != 1) {
          throw DataError("classification target must be a single label: " +
                          e.target_path);
        }
        detail::label_at(s.target, 0, classes);
        break;
      }
      case TaskKind::Segmentation: {
        if (s.target.rank() != 2 || s.target.dim(0) != h || s.target.dim(1) != w) {
          throw DataError("segmentation target must be (" + std::to_string(h) + "," +
                          std::to_string(w) + "): " + e.target_path);
        }
        for (std::size_t i = 0; i < s.target.numel(); ++i) {
          detail::label_at(s.target, i, classes);
        }
        break;
      }
      case TaskKind::Regression: {
        if (s.target.rank() != 3 || s.target.dim(1) != h || s.target.dim(2) != w) {
          throw DataError("regression target must be (c," + std::to_string(h) + "," +
                          std::to_string(w) + "): " + e.target_path);
        }
        break;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

template <typename T>
void check_dataset_spec(const NetworkSpec& spec, const Dataset<T>& ds) {
  if (task_for_head(spec.head) != ds.task) {
    throw DataError("dataset task does not match the network head");
  }
  if (ds.samples.empty()) return;
  const Tensor<T>& x0 = ds.samples.front().input;
  if (x0.dim(0) != spec.input_channels) {
    throw DataError("dataset has " + std::to_string(x0.dim(0)) +
                    " input channels, network wants " +
                    std::to_string(spec.input_channels));
  }
  if (ds.task != TaskKind::Regression && ds.classes != spec.classes) {
    throw DataError("dataset class count " + std::to_string(ds.classes) +
                    " does not match network classes " + std::to_string(spec.classes));
  }
}

template <typename T>
LossFn<T> make_loss(LossKind kind, const Tensor<T>& target, const Tensor<T>& weights) {
  if (kind == LossKind::CrossEntropy) {
    return [&target, &weights](const Tensor<T>& out) {
      return weighted_cross_entropy(out, target, weights);
    };
  }
  return [&target](const Tensor<T>& out) { return l2_loss(out, target); };
}

/// Class histogram of a labeled dataset (per sample or per pixel).
template <typename T>
std::vector<std::size_t> label_histogram(const Dataset<T>& ds) {
  std::vector<std::size_t> hist(ds.classes, 0);
  for (const Sample<T>& s : ds.samples) {
    for (std::size_t i = 0; i < s.target.numel(); ++i) {
      ++hist[detail::label_at(s.target, i, ds.classes)];
    }
  }
  return hist;
}

template <typename T>
struct EvalResult {
  double loss = 0;
  Metrics metrics;
};

/// Deterministic full pass in dataset order: mean loss plus both accuracy
/// metrics (zeros for regression).
template <typename T>
EvalResult<T> evaluate(const NetworkSpec& spec, const NetworkParams<T>& params,
                       const Dataset<T>& ds, LossKind kind,
                       const Tensor<T>& class_weights) {
  check_dataset_spec(spec, ds);
  EvalResult<T> r;
  if (ds.samples.empty()) return r;
  MetricsAccumulator acc(ds.classes == 0 ? 1 : ds.classes);
  double loss_sum = 0;
  for (const Sample<T>& s : ds.samples) {
    const Tensor<T> out = forward_network(spec, params, s.input).output;
    loss_sum += make_loss(kind, s.target, class_weights)(out).value;
    if (ds.task == TaskKind::Classification) {
      acc.add(argmax_class(out), detail::label_at(s.target, 0, ds.classes));
    } else if (ds.task == TaskKind::Segmentation) {
      const std::vector<std::size_t> pred = argmax_map(out);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        acc.add(pred[i], detail::label_at(s.target, i, ds.classes));
      }
    }
  }
  r.loss = loss_sum / double(ds.samples.size());
  if (ds.task != TaskKind::Regression) r.metrics = acc.result();
  return r;
}

struct EpochRow {
  std::size_t epoch = 0;
  double loss = 0;
  double global_acc = 0;
  double class_avg = 0;
  double lr = 0;
  std::size_t peak_activation_bytes = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "epoch,loss,global_acc,class_avg,lr,peak_activation_bytes";

inline std::string format_csv_row(const EpochRow& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%zu", r.epoch, r.loss,
                r.global_acc, r.class_avg, r.lr, r.peak_activation_bytes);
  return buf;
}

inline std::string metrics_csv(const std::vector<EpochRow>& rows) {
  std::string out = kMetricsCsvHeader;
  out += '\n';
  for (const EpochRow& r : rows) {
    out += format_csv_row(r);
    out += '\n';
  }
  return out;
}

/// Full optimizer + progress state, as stored in a training checkpoint.
template <typename T>
struct TrainState {
  NetworkSpec spec;
  std::size_t input_h = 0, input_w = 0;
  NetworkParams<T> params;
  NetworkParams<T> opt_m;  // SGD velocity or Adam first moment
  NetworkParams<T> opt_v;  // Adam second moment
  std::size_t opt_t = 0;
  std::size_t epochs_done = 0;
  Tensor<T> class_weights;
};

template <typename T>
void save_train_checkpoint(const std::string& path, const TrainState<T>& st) {
  Checkpoint<T> ckpt;
  encode_spec(st.spec, st.input_h, st.input_w, ckpt);
  encode_params(st.spec, st.params, ckpt);
  for_each_param(st.spec, st.opt_m, [&](const std::string& name, const Tensor<T>& t) {
    ckpt.add("opt.m." + name, t);
  });
  for_each_param(st.spec, st.opt_v, [&](const std::string& name, const Tensor<T>& t) {
    ckpt.add("opt.v." + name, t);
  });
  ckpt.add_scalar("opt.t", double(st.opt_t));
  ckpt.add_scalar("meta.epoch", double(st.epochs_done));
  if (!st.class_weights.empty()) ckpt.add("loss.weights", st.class_weights);
  write_checkpoint(path, ckpt);
}

template <typename T>
TrainState<T> load_train_checkpoint(const std::string& path) {
  const Checkpoint<T> ckpt = read_checkpoint<T>(path);
  TrainState<T> st;
  st.spec = decode_spec(ckpt);
  st.input_h = std::size_t(ckpt.scalar("spec.input_h"));
  st.input_w = std::size_t(ckpt.scalar("spec.input_w"));
  st.params = decode_params(st.spec, ckpt);
  st.opt_m = zeros_like_params(st.spec, st.params);
  st.opt_v = zeros_like_params(st.spec, st.params);
  for_each_param(st.spec, st.opt_m, [&](const std::string& name, Tensor<T>& t) {
    const Tensor<T>* src = ckpt.find("opt.m." + name);
    if (src) t = *src;
  });
  for_each_param(st.spec, st.opt_v, [&](const std::string& name, Tensor<T>& t) {
    const Tensor<T>* src = ckpt.find("opt.v." + name);
    if (src) t = *src;
  });
  if (ckpt.find("opt.t")) st.opt_t = std::size_t(ckpt.scalar("opt.t"));
  if (ckpt.find("meta.epoch")) st.epochs_done = std::size_t(ckpt.scalar("meta.epoch"));
  if (const Tensor<T>* w = ckpt.find("loss.weights")) st.class_weights = *w;
  return st;
}

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<EpochRow> rows;
};

/// Called after each epoch with that epoch's row and the current parameters.
/// Returning false stops training early (the checkpoint is still written).
template <typename T>
using EpochCallback = std::function<bool(const EpochRow&, const NetworkParams<T>&)>;

namespace detail {

template <typename T>
std::vector<Tensor<T>*> param_tensor_list(const NetworkSpec& spec, NetworkParams<T>& p) {
  std::vector<Tensor<T>*> out;
  for_each_param(spec, p, [&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
void zero_params(const NetworkSpec& spec, NetworkParams<T>& p) {
  for_each_param(spec, p, [&](const std::string&, Tensor<T>& t) {
    T* v = t.raw();
    for (std::size_t i = 0; i < t.numel(); ++i) v[i] = T(0);
  });
}

template <typename T>
void accumulate_params(const NetworkSpec& spec, const NetworkParams<T>& src, T scale,
                       NetworkParams<T>& dst) {
  auto dl = param_tensor_list(spec, dst);
  auto sl = param_tensor_list(spec, const_cast<NetworkParams<T>&>(src));
  for (std::size_t i = 0; i < dl.size(); ++i) axpy(scale, *sl[i], *dl[i]);
}

}  // namespace detail

/// Runs epochs [state.epochs_done, cfg.epochs) of deterministic single-thread
/// training. Per-epoch rows carry post-epoch metrics on the training set, so
/// re-evaluating the written checkpoint reproduces the last row exactly.
/// Pass a `resume` state loaded from a checkpoint to continue a run.
template <typename T>
TrainResult<T> train_loop(const NetworkSpec& spec, const TrainConfig& cfg,
                          const Dataset<T>& train_ds,
                          const EpochCallback<T>& on_epoch = {},
                          const TrainState<T>* resume = nullptr) {
  spec.validate();
  check_dataset_spec(spec, train_ds);
  if (train_ds.samples.empty()) throw DataError("training dataset is empty");
  const std::size_t h = train_ds.samples.front().input.dim(1);
  const std::size_t w = train_ds.samples.front().input.dim(2);

  TrainResult<T> result;
  TrainState<T>& st = result.state;
  if (resume) {
    st = *resume;
    if (st.input_h != h || st.input_w != w) {
      throw DataError("checkpoint input size does not match the dataset");
    }
  } else {
    st.spec = spec;
    st.input_h = h;
    st.input_w = w;
    Rng init_rng(cfg.seed);
    st.params = init_params<T>(spec, h, w, init_rng);
    st.opt_m = zeros_like_params(spec, st.params);
    st.opt_v = zeros_like_params(spec, st.params);
    if (cfg.loss == LossKind::CrossEntropy && cfg.weighting == Weighting::MeanFrequency) {
      st.class_weights = mean_frequency_weights<T>(label_histogram(train_ds));
    }
  }

  StepSchedule schedule = cfg.schedule;
  schedule.lr0 = cfg.lr;

  auto params_list = detail::param_tensor_list(spec, st.params);
  auto m_list = detail::param_tensor_list(spec, st.opt_m);
  auto v_list = detail::param_tensor_list(spec, st.opt_v);
  NetworkParams<T> grad_accum = zeros_like_params(spec, st.params);
  auto grad_list = detail::param_tensor_list(spec, grad_accum);

  const std::string ckpt_path =
      cfg.out_dir.empty()
          ? std::string()
          : (std::filesystem::path(cfg.out_dir) / "checkpoint.htnc").string();
  const auto save = [&]() {
    if (!ckpt_path.empty()) save_train_checkpoint(ckpt_path, st);
  };

  const std::size_t n = train_ds.samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t e = st.epochs_done; e < cfg.epochs; ++e) {
    const double lr = lr_at(schedule, e);
    Rng shuffle_rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (e + 1)));
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_rng.shuffle(order.begin(), order.end());

    std::size_t peak = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      detail::zero_params(spec, grad_accum);
      for (std::size_t bi = start; bi < stop; ++bi) {
        const Sample<T>& s = train_ds.samples[order[bi]];
        const LossFn<T> loss = make_loss(cfg.loss, s.target, st.class_weights);
        GradResult<T> g = backprop(spec, st.params, s.input, loss);
        peak = std::max(peak, g.peak_activation_bytes);
        detail::accumulate_params(spec, g.grads, T(1.0 / double(stop - start)),
                                  grad_accum);
      }
      ++st.opt_t;
      for (std::size_t i = 0; i < params_list.size(); ++i) {
        if (cfg.optimizer == OptKind::Sgd) {
          sgd_step(*params_list[i], *grad_list[i], *m_list[i], lr, cfg.momentum,
                   cfg.weight_decay);
        } else {
          adam_step(*params_list[i], *grad_list[i], *m_list[i], *v_list[i], lr,
                    cfg.beta1, cfg.beta2, cfg.eps, st.opt_t);
        }
      }
    }

    st.epochs_done = e + 1;
    const EvalResult<T> ev = evaluate(spec, st.params, train_ds, cfg.loss, st.class_weights);
    EpochRow row;
    row.epoch = e;
    row.loss = ev.loss;
    row.global_acc = ev.metrics.global_accuracy;
    row.class_avg = ev.metrics.class_average;
    row.lr = lr;
    row.peak_activation_bytes = peak;
    result.rows.push_back(row);

    if (cfg.checkpoint_every > 0 && st.epochs_done % cfg.checkpoint_every == 0) save();
    if (on_epoch && !on_epoch(row, st.params)) break;
  }
  save();
  return result;
}

}  // namespace hypernet
