#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "hypernet/blocks.hpp"
#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"

using namespace hypernet;

namespace {

BlockParams<double> random_block(std::size_t c, Rng& rng, double scale = 0.3) {
  ConvKernel<double> k(random_uniform<double>({c, c, 3, 3}, rng, -scale, scale));
  Tensor<double> b = random_uniform<double>({c}, rng, -scale, scale);
  return BlockParams<double>(std::move(k), std::move(b));
}

BlockParams<double> zero_block(std::size_t c) {
  return BlockParams<double>(ConvKernel<double>(Tensor<double>({c, c, 3, 3})),
                             Tensor<double>({c}));
}

BlockParams<double> scalar_block(double weight, double bias) {
  Tensor<double> k({1, 1, 1, 1});
  k[0] = weight;
  Tensor<double> b({1});
  b[0] = bias;
  return BlockParams<double>(ConvKernel<double>(std::move(k)), std::move(b));
}

}  // namespace

TEST_CASE("symmetric layer hand values through a 1x1 kernel") {
  const BlockParams<double> p = scalar_block(1.0, 0.0);

  Tensor<double> one = Tensor<double>::full({1, 1, 1}, 1.0);
  CHECK(symmetric_layer(one, p)[0] == doctest::Approx(-1.0));

  Tensor<double> neg = Tensor<double>::full({1, 1, 1}, -2.0);
  CHECK(symmetric_layer(neg, p)[0] == 0.0);

  Rng rng(1);
  Tensor<double> y = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  CHECK(max_abs(symmetric_layer(y, zero_block(2))) == 0.0);
}

TEST_CASE("symmetric layer vjp matches finite differences") {
  Rng rng(2);
  const std::size_t c = 2;
  Tensor<double> y = random_uniform<double>({c, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> g = random_uniform<double>({c, 4, 4}, rng, -1.0, 1.0);
  BlockParams<double> p = random_block(c, rng);

  Tensor<double> gK(p.K.weights.shape());
  Tensor<double> gb(p.b.shape());
  BlockGrad<double> acc{&gK, &gb};
  const Tensor<double> gy = symmetric_layer_vjp(y, g, p, acc);

  const double h = 1e-6;
  auto probe = [&](const BlockParams<double>& q, const Tensor<double>& yy) {
    return dot(symmetric_layer(yy, q), g);
  };

  double worst = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    Tensor<double> yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    worst = std::max(worst, std::abs((probe(p, yp) - probe(p, ym)) / (2 * h) - gy[i]));
  }
  CHECK(worst < 1e-6);

  worst = 0;
  for (std::size_t i = 0; i < p.K.weights.numel(); ++i) {
    BlockParams<double> pp = p, pm = p;
    pp.K.weights[i] += h;
    pm.K.weights[i] -= h;
    worst = std::max(worst, std::abs((probe(pp, y) - probe(pm, y)) / (2 * h) - gK[i]));
  }
  CHECK(worst < 1e-6);

  worst = 0;
  for (std::size_t i = 0; i < p.b.numel(); ++i) {
    BlockParams<double> pp = p, pm = p;
    pp.b[i] += h;
    pm.b[i] -= h;
    worst = std::max(worst, std::abs((probe(pp, y) - probe(pm, y)) / (2 * h) - gb[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("constant state is a leapfrog fixed point when f vanishes") {
  Tensor<double> c = Tensor<double>::full({2, 4, 4}, 1.25);
  Tensor<double> c2 = c;
  StatePair<double> s(std::move(c2), std::move(c), 0);
  const StatePair<double> next = hyper_step(s, zero_block(2), false);
  CHECK(max_abs_diff(next.y_curr, s.y_curr) == 0.0);
  CHECK(max_abs_diff(next.y_prev, s.y_curr) == 0.0);
  CHECK(next.level == 0);
}

TEST_CASE("zero history extrapolates linearly when f vanishes") {
  Rng rng(3);
  Tensor<double> y = random_uniform<double>({1, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> zero(y.shape());
  StatePair<double> s(std::move(zero), Tensor<double>(y), 0);
  const StatePair<double> next = hyper_step(s, zero_block(1), false);
  CHECK(max_abs_diff(next.y_curr, scaled(y, 2.0)) == 0.0);

  // and the reverse of (y, 2y) recovers the zero history exactly
  const StatePair<double> back = hyper_reverse(next, zero_block(1), false);
  CHECK(max_abs(back.y_prev) == 0.0);
  CHECK(max_abs_diff(back.y_curr, y) == 0.0);
}

TEST_CASE("single block reversal is exact to near machine precision") {
  Rng rng(4);
  Tensor<double> a = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  const StatePair<double> s(std::move(a), std::move(b), 0);
  const BlockParams<double> p = random_block(2, rng);

  const StatePair<double> fwd = hyper_step(s, p, false);
  const StatePair<double> back = hyper_reverse(fwd, p, false);
  CHECK(max_abs_diff(back.y_prev, s.y_prev) < 1e-12);
  CHECK(max_abs_diff(back.y_curr, s.y_curr) < 1e-12);
}

TEST_CASE("coarsening block transforms shapes and reverses exactly") {
  Rng rng(5);
  Tensor<double> a = random_uniform<double>({2, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({2, 8, 8}, rng, -1.0, 1.0);
  const StatePair<double> s(std::move(a), std::move(b), 0);
  const BlockParams<double> p = random_block(8, rng);

  const StatePair<double> fwd = hyper_step(s, p, true);
  CHECK(fwd.y_curr.dim(0) == 8);
  CHECK(fwd.y_curr.dim(1) == 4);
  CHECK(fwd.level == 1);

  const StatePair<double> back = hyper_reverse(fwd, p, true);
  CHECK(back.level == 0);
  CHECK(back.y_curr.dim(0) == 2);
  CHECK(back.y_curr.dim(1) == 8);
  CHECK(max_abs_diff(back.y_prev, s.y_prev) < 1e-12);
  CHECK(max_abs_diff(back.y_curr, s.y_curr) < 1e-12);
}

TEST_CASE("refining block reverses exactly and restores resolution") {
  Rng rng(6);
  Tensor<double> a = random_uniform<double>({8, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({8, 4, 4}, rng, -1.0, 1.0);
  const StatePair<double> s(std::move(a), std::move(b), 1);
  const BlockParams<double> p = random_block(2, rng);

  const StatePair<double> fwd = up_step(s, p, true);
  CHECK(fwd.y_curr.dim(0) == 2);
  CHECK(fwd.y_curr.dim(1) == 8);
  CHECK(fwd.level == 0);

  const StatePair<double> back = up_reverse(fwd, p, true);
  CHECK(max_abs_diff(back.y_prev, s.y_prev) < 1e-12);
  CHECK(max_abs_diff(back.y_curr, s.y_curr) < 1e-12);
}

TEST_CASE("refine of a constant LL-only state yields a constant fine image") {
  Tensor<double> y({4, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) y[i] = 2.0;  // LL channel, details zero
  Tensor<double> y2 = y;
  const StatePair<double> s(std::move(y2), std::move(y), 1);
  const StatePair<double> next = up_step(s, zero_block(1), true);
  CHECK(next.y_curr.dim(0) == 1);
  CHECK(next.y_curr.dim(1) == 4);
  // y_prev' = T^-1(y_curr) = constant 1; y_curr' = 2*1 - 1 + 0 = 1
  for (std::size_t i = 0; i < next.y_curr.numel(); ++i) {
    CHECK(next.y_curr[i] == doctest::Approx(1.0));
  }
}

TEST_CASE("leapfrog vjp matches finite differences across transforms") {
  Rng rng(7);
  for (const StepTransform t :
       {StepTransform::None, StepTransform::Coarsen, StepTransform::Refine}) {
    const std::size_t c = t == StepTransform::Refine ? 4 : 1;
    const std::size_t side = t == StepTransform::Refine ? 2 : 4;
    const std::size_t c_post = t == StepTransform::Coarsen ? 4 * c
                               : t == StepTransform::Refine ? c / 4
                                                            : c;
    Tensor<double> a = random_uniform<double>({c, side, side}, rng, -1.0, 1.0);
    Tensor<double> b = random_uniform<double>({c, side, side}, rng, -1.0, 1.0);
    const StatePair<double> s(std::move(a), std::move(b), 0);
    const BlockParams<double> p = random_block(c_post, rng);

    const StatePair<double> out = leapfrog_step(s, p, t);
    Tensor<double> gp = random_uniform<double>(out.y_prev.shape(), rng, -1.0, 1.0);
    Tensor<double> gc = random_uniform<double>(out.y_curr.shape(), rng, -1.0, 1.0);

    Tensor<double> gK(p.K.weights.shape());
    Tensor<double> gb(p.b.shape());
    BlockGrad<double> acc{&gK, &gb};
    const StatePair<double> gin = leapfrog_vjp(s, p, t, gp, gc, acc);

    auto probe = [&](const StatePair<double>& ss, const BlockParams<double>& q) {
      const StatePair<double> o = leapfrog_step(ss, q, t);
      return dot(o.y_prev, gp) + dot(o.y_curr, gc);
    };

    const double h = 1e-6;
    double worst = 0;
    for (std::size_t i = 0; i < s.y_prev.numel(); ++i) {
      StatePair<double> sp = s, sm = s;
      sp.y_prev[i] += h;
      sm.y_prev[i] -= h;
      worst = std::max(worst,
                       std::abs((probe(sp, p) - probe(sm, p)) / (2 * h) - gin.y_prev[i]));
    }
    for (std::size_t i = 0; i < s.y_curr.numel(); ++i) {
      StatePair<double> sp = s, sm = s;
      sp.y_curr[i] += h;
      sm.y_curr[i] -= h;
      worst = std::max(worst,
                       std::abs((probe(sp, p) - probe(sm, p)) / (2 * h) - gin.y_curr[i]));
    }
    for (std::size_t i = 0; i < p.K.weights.numel(); ++i) {
      BlockParams<double> pp = p, pm = p;
      pp.K.weights[i] += h;
      pm.K.weights[i] -= h;
      worst = std::max(worst, std::abs((probe(s, pp) - probe(s, pm)) / (2 * h) - gK[i]));
    }
    for (std::size_t i = 0; i < p.b.numel(); ++i) {
      BlockParams<double> pp = p, pm = p;
      pp.b[i] += h;
      pm.b[i] -= h;
      worst = std::max(worst, std::abs((probe(s, pp) - probe(s, pm)) / (2 * h) - gb[i]));
    }
    CAPTURE(int(t));
    CHECK(worst < 2e-6);
  }
}

TEST_CASE("opening layer duplicates the conv output into both lags") {
  Rng rng(8);
  Tensor<double> x = random_uniform<double>({3, 4, 4}, rng, -1.0, 1.0);
  ConvKernel<double> k(random_uniform<double>({2, 3, 3, 3}, rng, -0.5, 0.5));
  Tensor<double> bias = random_uniform<double>({2}, rng, -0.5, 0.5);
  const StatePair<double> s = opening_layer(x, k, bias);
  CHECK(s.level == 0);
  CHECK(max_abs_diff(s.y_prev, s.y_curr) == 0.0);
  CHECK(max_abs_diff(s.y_curr, conv2d(x, k, &bias)) == 0.0);

  const StatePair<double> z =
      opening_layer(x, ConvKernel<double>(Tensor<double>({2, 3, 3, 3})),
                    Tensor<double>({2}));
  CHECK(max_abs(z.y_curr) == 0.0);
}

TEST_CASE("classifier head pools globally") {
  Tensor<double> y = Tensor<double>::full({3, 4, 4}, 0.5);
  Tensor<double> W({2, 3});
  for (std::size_t i = 0; i < 3; ++i) W[i] = 1.0;  // row 0 all ones
  Tensor<double> b({2});
  const Tensor<double> logits = classifier_head(y, W, b);
  CHECK(logits[0] == doctest::Approx(1.5));  // c * v = 3 * 0.5
  CHECK(logits[1] == 0.0);

  // spatial permutation invariance
  Rng rng(9);
  Tensor<double> yr = random_uniform<double>({3, 2, 2}, rng, -1.0, 1.0);
  Tensor<double> yp = yr;
  for (std::size_t c = 0; c < 3; ++c) {
    std::swap(yp[c * 4 + 0], yp[c * 4 + 3]);
    std::swap(yp[c * 4 + 1], yp[c * 4 + 2]);
  }
  Tensor<double> Wr = random_uniform<double>({2, 3}, rng, -1.0, 1.0);
  Tensor<double> br = random_uniform<double>({2}, rng, -1.0, 1.0);
  CHECK(max_abs_diff(classifier_head(yr, Wr, br), classifier_head(yp, Wr, br)) < 1e-15);
}

TEST_CASE("classifier head vjp matches finite differences") {
  Rng rng(10);
  Tensor<double> y = random_uniform<double>({3, 2, 2}, rng, -1.0, 1.0);
  Tensor<double> W = random_uniform<double>({4, 3}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({4}, rng, -1.0, 1.0);
  Tensor<double> g = random_uniform<double>({4}, rng, -1.0, 1.0);

  Tensor<double> gW(W.shape());
  Tensor<double> gb(b.shape());
  HeadGrad<double> acc{&gW, &gb};
  const Tensor<double> gy = classifier_head_vjp(y, W, g, acc);

  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    Tensor<double> yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    const double fd =
        (dot(classifier_head(yp, W, b), g) - dot(classifier_head(ym, W, b), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gy[i]));
  }
  for (std::size_t i = 0; i < W.numel(); ++i) {
    Tensor<double> Wp = W, Wm = W;
    Wp[i] += h;
    Wm[i] -= h;
    const double fd =
        (dot(classifier_head(y, Wp, b), g) - dot(classifier_head(y, Wm, b), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gW[i]));
  }
  for (std::size_t i = 0; i < b.numel(); ++i) {
    Tensor<double> bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    const double fd =
        (dot(classifier_head(y, W, bp), g) - dot(classifier_head(y, W, bm), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gb[i]));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("flat head vjp matches finite differences") {
  Rng rng(11);
  Tensor<double> y = random_uniform<double>({2, 2, 2}, rng, -1.0, 1.0);
  Tensor<double> W = random_uniform<double>({3, 8}, rng, -1.0, 1.0);
  Tensor<double> b = random_uniform<double>({3}, rng, -1.0, 1.0);
  Tensor<double> g = random_uniform<double>({3}, rng, -1.0, 1.0);

  Tensor<double> gW(W.shape());
  Tensor<double> gb(b.shape());
  HeadGrad<double> acc{&gW, &gb};
  const Tensor<double> gy = flat_head_vjp(y, W, g, acc);

  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    Tensor<double> yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    const double fd =
        (dot(flat_head(yp, W, b), g) - dot(flat_head(ym, W, b), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gy[i]));
  }
  for (std::size_t i = 0; i < W.numel(); ++i) {
    Tensor<double> Wp = W, Wm = W;
    Wp[i] += h;
    Wm[i] -= h;
    const double fd =
        (dot(flat_head(y, Wp, b), g) - dot(flat_head(y, Wm, b), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gW[i]));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("dense head keeps resolution and enforces 1x1") {
  Rng rng(12);
  Tensor<double> y = random_uniform<double>({4, 6, 6}, rng, -1.0, 1.0);
  ConvKernel<double> k(random_uniform<double>({2, 4, 1, 1}, rng, -1.0, 1.0));
  const Tensor<double> out = dense_head(y, k);
  CHECK(out.dim(0) == 2);
  CHECK(out.dim(1) == 6);
  CHECK(out.dim(2) == 6);
  ConvKernel<double> k3(random_uniform<double>({2, 4, 3, 3}, rng, -1.0, 1.0));
  CHECK_THROWS_AS(dense_head(y, k3), ShapeError);
}

TEST_CASE("resnet step identity and zero couplings") {
  Rng rng(13);
  Tensor<double> y = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  CHECK(max_abs_diff(resnet_step(y, zero_block(2), true), y) == 0.0);
  CHECK(max_abs(resnet_step(y, zero_block(2), false)) == 0.0);

  const BlockParams<double> p = random_block(2, rng);
  const Tensor<double> want = add(y, symmetric_layer(y, p));
  CHECK(max_abs_diff(resnet_step(y, p, true), want) < 1e-15);
}

TEST_CASE("resnet step vjp matches finite differences") {
  Rng rng(14);
  Tensor<double> y = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  Tensor<double> g = random_uniform<double>({2, 4, 4}, rng, -1.0, 1.0);
  const BlockParams<double> p = random_block(2, rng);

  Tensor<double> gK(p.K.weights.shape());
  Tensor<double> gb(p.b.shape());
  BlockGrad<double> acc{&gK, &gb};
  const Tensor<double> gy = resnet_step_vjp(y, p, true, g, acc);

  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    Tensor<double> yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    const double fd =
        (dot(resnet_step(yp, p, true), g) - dot(resnet_step(ym, p, true), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gy[i]));
  }
  for (std::size_t i = 0; i < p.K.weights.numel(); ++i) {
    BlockParams<double> pp = p, pm = p;
    pp.K.weights[i] += h;
    pm.K.weights[i] -= h;
    const double fd =
        (dot(resnet_step(y, pp, true), g) - dot(resnet_step(y, pm, true), g)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gK[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("state pair rejects mismatched lag shapes") {
  CHECK_THROWS_AS(
      StatePair<double>(Tensor<double>({1, 2, 2}), Tensor<double>({1, 4, 4}), 0),
      ShapeError);
}
