#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hypernet/grad.hpp"
#include "hypernet/losses.hpp"
#include "hypernet/network.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"

using namespace hypernet;

namespace {

struct NamedTensors {
  std::vector<std::string> names;
  std::vector<const Tensor<double>*> tensors;
};

NamedTensors collect(const NetworkSpec& spec, const NetworkParams<double>& p) {
  NamedTensors out;
  for_each_param(spec, p, [&](const std::string& n, const Tensor<double>& t) {
    out.names.push_back(n);
    out.tensors.push_back(&t);
  });
  return out;
}

double max_rel_dev(const NetworkSpec& spec, const NetworkParams<double>& a,
                   const NetworkParams<double>& ref) {
  const NamedTensors av = collect(spec, a), rv = collect(spec, ref);
  double worst = 0;
  for (std::size_t i = 0; i < av.tensors.size(); ++i) {
    worst = std::max(worst, rel_deviation(*av.tensors[i], *rv.tensors[i]));
  }
  return worst;
}

// FD-vs-stored deviation restricted to coordinates the probe marked valid.
double fd_rel_dev(const NetworkSpec& spec, const FdResult<double>& fd,
                  const NetworkParams<double>& ref) {
  const NamedTensors fv = collect(spec, fd.grads);
  const NamedTensors sv = collect(spec, fd.status);
  const NamedTensors rv = collect(spec, ref);
  double worst = 0;
  for (std::size_t t = 0; t < fv.tensors.size(); ++t) {
    const Tensor<double>& g = *fv.tensors[t];
    const Tensor<double>& st = *sv.tensors[t];
    const Tensor<double>& r = *rv.tensors[t];
    double num = 0;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (st[i] == 1.0) num = std::max(num, std::abs(g[i] - r[i]));
    }
    worst = std::max(worst, num / (max_abs(r) + 1e-300));
  }
  return worst;
}

LossFn<double> ce_loss(const Tensor<double>& label, const Tensor<double>& weights) {
  return [&label, &weights](const Tensor<double>& out) {
    return weighted_cross_entropy(out, label, weights);
  };
}

}  // namespace

TEST_CASE("single linear weight recovers the closed-form gradient") {
  // Opening 3x3 kernel with only its center weight w on a 1x1 image acts as
  // multiplication by w; blocks have K = 0 so the chain is the identity;
  // the regressor head is a unit 1x1 conv. Loss (wx - t)^2 then has
  // dL/dw = 2 (wx - t) x exactly.
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 1;
  spec.levels = 0;
  spec.blocks_per_level = 1;
  spec.head = HeadKind::Regressor;

  const double w = 0.8, xval = 1.7, tval = -0.4;
  NetworkParams<double> p;
  Tensor<double> ok({1, 1, 3, 3});
  ok[4] = w;
  p.opening_K = ConvKernel<double>(ok);
  p.opening_b = Tensor<double>({1});
  p.blocks.emplace_back(ConvKernel<double>(Tensor<double>({1, 1, 3, 3})),
                        Tensor<double>({1}));
  Tensor<double> hk({1, 1, 1, 1});
  hk[0] = 1.0;
  p.head_K = ConvKernel<double>(hk);
  p.head_b = Tensor<double>({1});

  Tensor<double> x = Tensor<double>::full({1, 1, 1}, xval);
  Tensor<double> target = Tensor<double>::full({1, 1, 1}, tval);
  const LossFn<double> loss = [&](const Tensor<double>& out) {
    return l2_loss(out, target);
  };

  for (const GradMode mode : {GradMode::Stored, GradMode::Reversible}) {
    NetworkSpec s = spec;
    s.mode = mode;
    const GradResult<double> r = backprop(s, p, x, loss);
    CHECK(r.loss == doctest::Approx((w * xval - tval) * (w * xval - tval)));
    const double want = 2.0 * (w * xval - tval) * xval;
    CHECK(r.grads.opening_K.weights[4] == doctest::Approx(want).epsilon(1e-12));
    CHECK(max_abs(r.grads.blocks[0].K.weights) == 0.0);
    const double want_head = 2.0 * (w * xval - tval) * (w * xval);
    CHECK(r.grads.head_K.weights[0] == doctest::Approx(want_head).epsilon(1e-12));
  }
}

TEST_CASE("all-zero parameters under a squared-output loss give zero gradients") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = 2;
  spec.classes = 3;
  Rng rng(1);
  NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
  for_each_param(spec, p, [](const std::string&, Tensor<double>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
  });
  Tensor<double> x = random_uniform<double>({1, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> target({3});
  const LossFn<double> loss = [&](const Tensor<double>& out) {
    return l2_loss(out, target);
  };
  const GradResult<double> r = backprop_stored(spec, p, x, loss);
  CHECK(r.loss == 0.0);
  const NamedTensors g = collect(spec, r.grads);
  for (const Tensor<double>* t : g.tensors) CHECK(max_abs(*t) == 0.0);
}

TEST_CASE("stored gradients match full-coordinate finite differences") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 1;
  spec.levels = 1;
  spec.blocks_per_level = 1;
  spec.classes = 2;
  Rng rng(2);
  const NetworkParams<double> p = init_params<double>(spec, 4, 4, rng);
  Tensor<double> x = random_uniform<double>({1, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> label({1});
  label[0] = 1.0;
  Tensor<double> weights;
  const LossFn<double> loss = ce_loss(label, weights);

  const GradResult<double> stored = backprop_stored(spec, p, x, loss);
  const FdResult<double> fd = finite_diff_grad(spec, p, x, loss, 1e-5);
  CHECK(fd_rel_dev(spec, fd, stored.grads) < 1e-4);
}

TEST_CASE("oracle chain holds on random nets across both topologies") {
  Rng rng(3);
  int checked = 0;
  for (const bool downup : {false, true}) {
    for (std::size_t levels : {std::size_t(0), std::size_t(1), std::size_t(2)}) {
      if (downup && levels == 0) continue;
      NetworkSpec spec;
      spec.input_channels = 1;
      spec.opening_width = 2;
      spec.levels = levels;
      spec.blocks_per_level = 2;
      spec.classes = 3;
      spec.topology = downup ? Topology::DownUp : Topology::DownOnly;
      spec.head = downup ? HeadKind::Segmenter : HeadKind::Classifier;
      const std::size_t side = 8;
      const NetworkParams<double> p = init_params<double>(spec, side, side, rng);
      Tensor<double> x = random_uniform<double>({1, side, side}, rng, -1.0, 1.0);

      Tensor<double> label;
      if (downup) {
        label = Tensor<double>({side, side});
        for (std::size_t i = 0; i < label.numel(); ++i) label[i] = double(rng.below(3));
      } else {
        label = Tensor<double>::full({1}, double(rng.below(3)));
      }
      Tensor<double> weights;
      const LossFn<double> loss = ce_loss(label, weights);

      const GradResult<double> stored = backprop_stored(spec, p, x, loss);
      const GradResult<double> rev = backprop_reversible(spec, p, x, loss);
      CHECK(rev.loss == doctest::Approx(stored.loss).epsilon(1e-12));
      CHECK(max_rel_dev(spec, rev.grads, stored.grads) < 1e-8);

      Rng fd_rng(100 + checked);
      const FdResult<double> fd =
          finite_diff_grad(spec, p, x, loss, 1e-5, 20, &fd_rng);
      CHECK(fd_rel_dev(spec, fd, stored.grads) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked == 5);
}

TEST_CASE("resnet baseline gradients match finite differences") {
  for (const BaselinePool pool : {BaselinePool::WavePool, BaselinePool::StridedAvg}) {
    NetworkSpec spec;
    spec.input_channels = 1;
    spec.opening_width = 2;
    spec.levels = 1;
    spec.blocks_per_level = 2;
    spec.classes = 3;
    spec.arch = Arch::ResNet;
    spec.mode = GradMode::Stored;
    spec.baseline_pool = pool;
    Rng rng(4);
    const NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
    Tensor<double> x = random_uniform<double>({1, 8, 8}, rng, -1.0, 1.0);
    Tensor<double> label = Tensor<double>::full({1}, 2.0);
    Tensor<double> weights;
    const LossFn<double> loss = ce_loss(label, weights);

    const GradResult<double> stored = backprop_stored(spec, p, x, loss);
    Rng fd_rng(5);
    const FdResult<double> fd = finite_diff_grad(spec, p, x, loss, 1e-5, 30, &fd_rng);
    CHECK(fd_rel_dev(spec, fd, stored.grads) < 1e-4);
  }
}

TEST_CASE("head gradients are bit-exact between engines when f vanishes") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = 3;
  spec.classes = 3;
  Rng rng(6);
  NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
  for (auto& blk : p.blocks) {
    for (std::size_t i = 0; i < blk.K.weights.numel(); ++i) blk.K.weights[i] = 0.0;
  }
  Tensor<double> x = random_uniform<double>({1, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> label = Tensor<double>::full({1}, 1.0);
  Tensor<double> weights;
  const LossFn<double> loss = ce_loss(label, weights);

  const GradResult<double> stored = backprop_stored(spec, p, x, loss);
  const GradResult<double> rev = backprop_reversible(spec, p, x, loss);
  CHECK(max_abs_diff(rev.grads.head_W, stored.grads.head_W) == 0.0);
  CHECK(max_abs_diff(rev.grads.head_b, stored.grads.head_b) == 0.0);
  CHECK(max_rel_dev(spec, rev.grads, stored.grads) < 1e-12);
}

TEST_CASE("non-finite states abort with the failing block named") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = 1;
  spec.classes = 2;
  Rng rng(7);
  const NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
  Tensor<double> x({1, 8, 8});
  x[3] = std::nan("");
  Tensor<double> label({1});
  Tensor<double> weights;
  const LossFn<double> loss = ce_loss(label, weights);
  try {
    backprop_stored(spec, p, x, loss);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("level0.block0") != std::string::npos);
  }
}

TEST_CASE("reversible engine guards against reconstruction divergence") {
  // Kernel weights far above the stable range make the forward norms grow by
  // orders of magnitude per block; the backward reconstruction then loses the
  // early states to cancellation and must abort rather than return garbage.
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 0;
  spec.blocks_per_level = 30;
  spec.classes = 2;
  Rng rng(8);
  NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
  for (auto& blk : p.blocks) {
    for (std::size_t i = 0; i < blk.K.weights.numel(); ++i) blk.K.weights[i] *= 4.0;
  }
  Tensor<double> x = random_uniform<double>({1, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> label({1});
  Tensor<double> weights;
  const LossFn<double> loss = ce_loss(label, weights);
  try {
    backprop_reversible(spec, p, x, loss);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("reconstruction diverged") != std::string::npos);
  }
}

TEST_CASE("finite differences reject a zero step") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 1;
  spec.classes = 2;
  Rng rng(9);
  const NetworkParams<double> p = init_params<double>(spec, 4, 4, rng);
  Tensor<double> x({1, 4, 4});
  Tensor<double> label({1});
  Tensor<double> weights;
  CHECK_THROWS_AS(
      finite_diff_grad(spec, p, x, ce_loss(label, weights), 0.0), ValueError);
}

TEST_CASE("activation accounting: reversible flat, stored affine in depth") {
  const std::vector<std::size_t> depths = {2, 4, 8};
  std::vector<std::size_t> rev, sto;
  for (const std::size_t d : depths) {
    rev.push_back(measure_peak_bytes<double>(d, GradMode::Reversible, 1).peak_bytes);
    sto.push_back(measure_peak_bytes<double>(d, GradMode::Stored, 1).peak_bytes);
  }
  CHECK(rev[0] == rev[1]);
  CHECK(rev[1] == rev[2]);
  // stored growth is exactly affine because every StatePair has equal size
  CHECK(sto[2] - sto[1] == 2 * (sto[1] - sto[0]));
  CHECK(sto[0] > rev[0]);

  std::vector<double> xs(depths.begin(), depths.end());
  std::vector<double> ys(sto.begin(), sto.end());
  CHECK(linear_r2(xs, ys) > 0.999999);
}

TEST_CASE("linear_r2 basics") {
  CHECK(linear_r2({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK(linear_r2({1, 2, 3}, {5, 5, 5}) == doctest::Approx(1.0));  // flat is linear
  CHECK(linear_r2({1, 2, 3, 4}, {1, -1, 1, -1}) < 0.5);
  CHECK_THROWS_AS(linear_r2({1}, {1}), ValueError);
}

TEST_CASE("gradient accumulation order is deterministic") {
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = 1;
  spec.blocks_per_level = 2;
  spec.classes = 3;
  Rng rng(10);
  const NetworkParams<double> p = init_params<double>(spec, 8, 8, rng);
  Tensor<double> x = random_uniform<double>({1, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> label = Tensor<double>::full({1}, 2.0);
  Tensor<double> weights;
  const LossFn<double> loss = ce_loss(label, weights);

  const GradResult<double> a = backprop_reversible(spec, p, x, loss);
  const GradResult<double> b = backprop_reversible(spec, p, x, loss);
  CHECK(max_rel_dev(spec, a.grads, b.grads) == 0.0);
  CHECK(a.loss == b.loss);
}
