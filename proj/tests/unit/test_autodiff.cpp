#include <doctest.h>

#include "crossuda/layers.hpp"
#include "crossuda/optim.hpp"
#include "oracles.hpp"

using namespace crossuda;
using ad::Var;

namespace {

// Analytic gradient of loss_fn w.r.t. one input tensor vs central finite
// differences, both in double precision.
template <class LossFn>
double check_grad(LossFn loss_fn, const Tensor<double>& x0, double step = 1e-5) {
  Var<double> x = Var<double>::param(x0);
  Var<double> loss = loss_fn(x);
  ad::backward(loss);
  const Eigen::ArrayXd analytic = x.grad().data;
  const Eigen::ArrayXd numeric = oracle::numeric_grad(
      [&](const Tensor<double>& t) {
        ad::NoGradGuard guard;
        Var<double> v = Var<double>::leaf(t);
        return loss_fn(v).scalar();
      },
      x0, step);
  return oracle::max_rel_error_scaled(analytic, numeric);
}

Tensor<double> randn(std::vector<int> shape, uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  return Tensor<double>::randn(std::move(shape), rng, 0.0, sigma);
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  const Tensor<double> other = randn({3, 4}, 7);
  CHECK(check_grad([&](Var<double> x) { return ad::sum(ad::mul(x, Var<double>::leaf(other))); },
                   randn({3, 4}, 1)) < 1e-6);
  CHECK(check_grad([&](Var<double> x) { return ad::mean(ad::mul(x, x)); },
                   randn({3, 4}, 2)) < 1e-6);
  CHECK(check_grad([&](Var<double> x) { return ad::sum(ad::affine(x, 2.5, -0.5)); },
                   randn({5}, 3)) < 1e-6);
  CHECK(check_grad([&](Var<double> x) { return ad::mean(ad::leaky_relu(x, 0.01)); },
                   randn({4, 4}, 4)) < 1e-4);
  CHECK(check_grad([&](Var<double> x) { return ad::mean(ad::tanh_act(x)); },
                   randn({4, 4}, 5)) < 1e-6);
  CHECK(check_grad([&](Var<double> x) { return ad::mean_square_diff(x, other); },
                   randn({3, 4}, 6)) < 1e-6);
  CHECK(check_grad([&](Var<double> x) { return ad::mean_square_to(x, 0.3); },
                   randn({3, 4}, 8)) < 1e-6);
  CHECK(check_grad(
            [&](Var<double> x) {
              Var<double> num = ad::sum(x);
              Var<double> den = ad::affine(ad::sum(ad::mul(x, x)), 1.0, 2.0);
              return ad::div(num, den);
            },
            randn({6}, 9)) < 1e-6);
}

TEST_CASE("softmax and cross-entropy gradients match finite differences") {
  Tensor<int32_t> labels({2, 5});
  Rng rng(11);
  for (int64_t i = 0; i < labels.size(); ++i) labels.data[i] = int32_t(rng.below(3));

  CHECK(check_grad(
            [&](Var<double> x) {
              Var<double> p = ad::softmax_channels(x);
              return ad::weighted_sum(p, randn({2, 3, 5}, 12));
            },
            randn({2, 3, 5}, 13)) < 1e-6);

  CHECK(check_grad([&](Var<double> x) { return ad::softmax_cross_entropy(x, labels); },
                   randn({2, 3, 5}, 14)) < 1e-6);
}

TEST_CASE("structural op gradients match finite differences") {
  const Tensor<double> wsum = randn({2, 5, 2, 2}, 20);
  CHECK(check_grad(
            [&](Var<double> x) {
              Var<double> c = ad::concat_channels(x, Var<double>::leaf(randn({2, 2, 2, 2}, 21)));
              return ad::weighted_sum(c, wsum);
            },
            randn({2, 3, 2, 2}, 22)) < 1e-6);

  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::weighted_sum(ad::upsample_nearest(x, 2), randn({1, 2, 4, 6}, 23));
            },
            randn({1, 2, 2, 3}, 24)) < 1e-6);

  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::weighted_sum(ad::upsample_nearest(x, 2), randn({1, 1, 4, 4, 4}, 25));
            },
            randn({1, 1, 2, 2, 2}, 26)) < 1e-6);

  std::vector<std::array<int, 3>> coords{{0, 1, 2}, {1, 0, 0}, {0, 2, 1}};
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::weighted_sum(ad::gather_spatial(x, coords), randn({3, 2}, 27));
            },
            randn({2, 2, 3, 3}, 28)) < 1e-6);
}

TEST_CASE("conv2d/conv3d gradients match finite differences") {
  // input gradient
  const Tensor<double> w2 = randn({2, 3, 3, 3}, 30, 0.5);
  const Tensor<double> b2 = randn({2}, 31, 0.5);
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::mean_square_to(
                  ad::conv2d(x, Var<double>::leaf(w2), Var<double>::leaf(b2), 2, 1), 0.0);
            },
            randn({2, 3, 6, 6}, 32)) < 1e-5);
  // weight and bias gradients
  const Tensor<double> x2 = randn({1, 2, 5, 5}, 33);
  CHECK(check_grad(
            [&](Var<double> w) {
              return ad::mean_square_to(
                  ad::conv2d(Var<double>::leaf(x2), w, Var<double>::leaf(randn({3}, 34)), 1, 1),
                  0.1);
            },
            randn({3, 2, 3, 3}, 35, 0.5)) < 1e-5);
  CHECK(check_grad(
            [&](Var<double> b) {
              return ad::mean_square_to(
                  ad::conv2d(Var<double>::leaf(x2), Var<double>::leaf(randn({3, 2, 3, 3}, 36)), b,
                             1, 1),
                  0.1);
            },
            randn({3}, 37)) < 1e-5);

  const Tensor<double> w3 = randn({2, 2, 3, 3, 3}, 38, 0.5);
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::mean_square_to(
                  ad::conv3d(x, Var<double>::leaf(w3), Var<double>::leaf(randn({2}, 39)), 2, 1),
                  0.0);
            },
            randn({1, 2, 4, 4, 4}, 40)) < 1e-5);
  CHECK(check_grad(
            [&](Var<double> w) {
              return ad::mean_square_to(
                  ad::conv3d(Var<double>::leaf(randn({1, 2, 4, 4, 4}, 41)), w,
                             Var<double>::leaf(randn({2}, 42)), 1, 1),
                  0.0);
            },
            randn({2, 2, 3, 3, 3}, 43, 0.5)) < 1e-5);
}

TEST_CASE("transposed conv and instance norm gradients match finite differences") {
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::mean_square_to(
                  ad::conv_transpose3d_x2(x, Var<double>::leaf(randn({3, 2, 2, 2, 2}, 50, 0.5)),
                                          Var<double>::leaf(randn({2}, 51))),
                  0.0);
            },
            randn({1, 3, 2, 3, 2}, 52)) < 1e-5);
  CHECK(check_grad(
            [&](Var<double> w) {
              return ad::mean_square_to(
                  ad::conv_transpose3d_x2(Var<double>::leaf(randn({1, 3, 2, 2, 2}, 53)), w,
                                          Var<double>::leaf(randn({2}, 54))),
                  0.0);
            },
            randn({3, 2, 2, 2, 2}, 55, 0.5)) < 1e-5);

  const Tensor<double> gamma = randn({3}, 60, 0.2);
  const Tensor<double> beta = randn({3}, 61, 0.2);
  const Tensor<double> inw = randn({2, 3, 4, 4}, 65);
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::weighted_sum(
                  ad::instance_norm(x, Var<double>::leaf(gamma), Var<double>::leaf(beta)), inw);
            },
            randn({2, 3, 4, 4}, 62)) < 1e-4);
  const Tensor<double> xin = randn({2, 3, 4, 4}, 63);
  CHECK(check_grad(
            [&](Var<double> g) {
              return ad::mean_square_to(
                  ad::instance_norm(Var<double>::leaf(xin), g, Var<double>::leaf(beta)), 0.0);
            },
            randn({3}, 64)) < 1e-5);
}

TEST_CASE("linear, l2 normalize and info_nce gradients match finite differences") {
  const Tensor<double> w = randn({4, 3}, 70, 0.5);
  const Tensor<double> b = randn({3}, 71, 0.5);
  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::mean_square_to(ad::linear(x, Var<double>::leaf(w), Var<double>::leaf(b)),
                                        0.0);
            },
            randn({5, 4}, 72)) < 1e-5);
  CHECK(check_grad(
            [&](Var<double> wv) {
              return ad::mean_square_to(
                  ad::linear(Var<double>::leaf(randn({5, 4}, 73)), wv, Var<double>::leaf(b)), 0.0);
            },
            randn({4, 3}, 74, 0.5)) < 1e-5);

  CHECK(check_grad(
            [&](Var<double> x) {
              return ad::weighted_sum(ad::l2_normalize_rows(x), randn({4, 5}, 75));
            },
            randn({4, 5}, 76)) < 1e-5);

  const Tensor<double> pos = randn({4, 8}, 77);
  const Tensor<double> negs = randn({4, 6, 8}, 78);
  CHECK(check_grad(
            [&](Var<double> q) {
              return ad::info_nce(q, Var<double>::leaf(pos), Var<double>::leaf(negs), 0.5);
            },
            randn({4, 8}, 79)) < 1e-5);
  CHECK(check_grad(
            [&](Var<double> n) {
              return ad::info_nce(Var<double>::leaf(randn({4, 8}, 80)), Var<double>::leaf(pos), n,
                                  0.5);
            },
            randn({4, 6, 8}, 81)) < 1e-5);
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  // y = sum(x*x + x) -> dy/dx = 2x + 1
  const Tensor<double> x0 = randn({6}, 90);
  Var<double> x = Var<double>::param(x0);
  Var<double> y = ad::sum(ad::add(ad::mul(x, x), x));
  ad::backward(y);
  for (int64_t i = 0; i < x0.size(); ++i)
    CHECK(x.grad().data[i] == doctest::Approx(2 * x0.data[i] + 1).epsilon(1e-12));
}

TEST_CASE("dropout scales kept activations and disables cleanly") {
  Rng rng(7);
  const Tensor<double> ones = Tensor<double>::full({1000}, 1.0);
  Var<double> x = Var<double>::leaf(ones, true);
  Var<double> y = ad::dropout(x, 0.25, rng, true);
  int kept = 0;
  for (int64_t i = 0; i < y.value().size(); ++i) {
    const double v = y.value().data[i];
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    if (v != 0.0) ++kept;
  }
  CHECK(kept > 600);
  CHECK(kept < 900);

  Rng rng2(7);
  Var<double> same = ad::dropout(x, 0.25, rng2, true);
  CHECK((same.value().data == y.value().data).all());

  Var<double> off = ad::dropout(x, 0.25, rng, false);
  CHECK((off.value().data == ones.data).all());
}

TEST_CASE("no-grad mode skips graph construction") {
  ad::NoGradGuard guard;
  Var<double> x = Var<double>::param(randn({3}, 95));
  Var<double> y = ad::sum(ad::mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("sgd and adam reduce a simple quadratic") {
  // minimize ||x - c||^2
  const Tensor<float> target = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f});
  {
    ad::ParamRegistry<float> reg;
    Rng rng(1);
    reg.add("x", Tensor<float>::randn({3}, rng));
    ad::Sgd<float> opt(0.9f, 0.0f);
    for (int it = 0; it < 200; ++it) {
      reg.zero_grads();
      Var<float> loss = ad::mean_square_diff(reg.entries[0].second, target);
      ad::backward(loss);
      opt.step(reg, 0.05f);
    }
    CHECK((reg.entries[0].second.value().data - target.data).abs().maxCoeff() < 1e-3f);
  }
  {
    ad::ParamRegistry<float> reg;
    Rng rng(2);
    reg.add("x", Tensor<float>::randn({3}, rng));
    ad::Adam<float> opt;
    for (int it = 0; it < 500; ++it) {
      reg.zero_grads();
      Var<float> loss = ad::mean_square_diff(reg.entries[0].second, target);
      ad::backward(loss);
      opt.step(reg, 0.05f);
    }
    CHECK((reg.entries[0].second.value().data - target.data).abs().maxCoeff() < 1e-2f);
  }
}
