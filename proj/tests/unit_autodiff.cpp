#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "acl/autodiff.hpp"
#include "acl/core.hpp"
#include "acl/rng.hpp"

using namespace acl;
using ad::Var;

namespace {

// Central finite differences over every element of every input, against the
// analytic gradient from backward(). Doubles throughout.
void check_grads(std::vector<Var<double>> inputs, std::function<Var<double>()> build, double tol = 1e-7,
                 double step = 1e-5) {
  for (auto& in : inputs) {
    in->grad = Tensor<double>();
    in->grad_ready = false;
  }
  Var<double> loss = build();
  ad::backward(loss);
  for (auto& in : inputs) {
    REQUIRE(in->grad_ready);
    for (std::int64_t i = 0; i < in->val.size(); ++i) {
      double keep = in->val[i];
      in->val[i] = keep + step;
      double up = build()->val[0];
      in->val[i] = keep - step;
      double dn = build()->val[0];
      in->val[i] = keep;
      double fd = (up - dn) / (2 * step);
      double an = in->grad[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1.0});
      CHECK(std::abs(fd - an) / denom < tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
  Rng rng(21);
  auto x = ad::leaf(Tensor<double>::uniform({2, 3, 4, 4}, rng, 0.2, 1.5), true);
  check_grads({x}, [&] { return ad::mean_all(ad::square(ad::tanh(x))); });
  check_grads({x}, [&] { return ad::mean_all(ad::sigmoid(ad::scale(x, 2.0))); });
  check_grads({x}, [&] { return ad::mean_all(ad::sqrt(ad::affine(x, 1.0, 2.0))); });
  check_grads({x}, [&] { return ad::mean_all(ad::recip(ad::affine(x, 1.0, 0.5))); });
  check_grads({x}, [&] { return ad::sum_all(ad::abs(ad::affine(x, 2.0, -1.0))); });
  check_grads({x}, [&] { return ad::mean_all(ad::leaky_relu(ad::affine(x, 4.0, -2.0), 0.2)); });
}

TEST_CASE("binary broadcasting gradients") {
  Rng rng(22);
  auto a = ad::leaf(Tensor<double>::randn({2, 3, 4, 4}, rng), true);
  auto b = ad::leaf(Tensor<double>::randn({2, 3, 1, 1}, rng), true);
  auto c = ad::leaf(Tensor<double>::randn({1, 3, 1, 1}, rng), true);
  check_grads({a, b, c}, [&] { return ad::mean_all(ad::mul(ad::add(a, b), c)); });
  check_grads({a, b}, [&] { return ad::mean_all(ad::square(ad::sub(a, b))); });
}

TEST_CASE("reduction gradients and values") {
  Rng rng(23);
  auto x = ad::leaf(Tensor<double>::randn({2, 3, 4, 5}, rng), true);
  auto m = ad::mean_dims(x, {2, 3});
  REQUIRE(m->val.shape() == Shape{2, 3, 1, 1});
  double manual = 0;
  for (int h = 0; h < 4; ++h)
    for (int w = 0; w < 5; ++w) manual += x->val[x->val.idx4(1, 2, h, w)];
  CHECK(m->val[m->val.idx4(1, 2, 0, 0)] == doctest::Approx(manual / 20.0));
  check_grads({x}, [&] { return ad::mean_all(ad::square(ad::sub(x, ad::mean_dims(x, {2, 3})))); });
  check_grads({x}, [&] { return ad::mean_all(ad::square(ad::sum_dims(x, {1}))); });
}

TEST_CASE("conv2d and linear gradients") {
  Rng rng(24);
  auto x = ad::leaf(Tensor<double>::randn({2, 2, 6, 6}, rng, 0.5), true);
  auto w = ad::leaf(Tensor<double>::randn({3, 2, 3, 3}, rng, 0.5), true);
  auto b = ad::leaf(Tensor<double>::randn({3}, rng, 0.5), true);
  check_grads({x, w, b}, [&] { return ad::mean_all(ad::square(ad::conv2d(x, w, b, 1, 1))); });
  check_grads({x, w, b}, [&] { return ad::mean_all(ad::square(ad::conv2d(x, w, b, 2, 1))); });

  auto xs = ad::leaf(Tensor<double>::randn({4, 5}, rng, 0.5), true);
  auto ws = ad::leaf(Tensor<double>::randn({3, 5}, rng, 0.5), true);
  auto bs = ad::leaf(Tensor<double>::randn({3}, rng, 0.5), true);
  check_grads({xs, ws, bs}, [&] { return ad::mean_all(ad::square(ad::linear(xs, ws, bs))); });
}

TEST_CASE("structural op gradients") {
  Rng rng(25);
  auto a = ad::leaf(Tensor<double>::randn({2, 2, 4, 4}, rng), true);
  auto b = ad::leaf(Tensor<double>::randn({2, 3, 4, 4}, rng), true);
  check_grads({a, b}, [&] { return ad::mean_all(ad::square(ad::concat_ch(a, b))); });
  check_grads({b}, [&] { return ad::mean_all(ad::square(ad::narrow_ch(b, 1, 2))); });
  check_grads({a}, [&] { return ad::mean_all(ad::square(ad::upsample_nearest2(a))); });
  check_grads({a}, [&] { return ad::mean_all(ad::square(ad::avg_pool3s2(a))); });
  check_grads({a}, [&] { return ad::mean_all(ad::square(ad::pad_reflect(a, 1))); });
  check_grads({a}, [&] { return ad::mean_all(ad::square(ad::reshape(a, {2, 32}))); });
}

TEST_CASE("composite_with_mask graph form matches the plain form") {
  Rng rng(26);
  auto raw = ad::leaf(Tensor<double>::uniform({2, 3, 4, 4}, rng, -1, 1), true);
  auto src = ad::leaf(Tensor<double>::uniform({2, 3, 4, 4}, rng, -1, 1), true);
  auto mask = ad::leaf(Tensor<double>::uniform({2, 1, 4, 4}, rng, 0, 1), true);
  auto out = ad::composite(raw, mask, src);
  Tensor<double> plain = composite_with_mask(raw->val, mask->val, src->val);
  for (std::int64_t i = 0; i < plain.size(); ++i) CHECK(out->val[i] == doctest::Approx(plain[i]).epsilon(1e-12));
  check_grads({raw, src, mask}, [&] { return ad::mean_all(ad::square(ad::composite(raw, mask, src))); });
}

TEST_CASE("no-grad mode produces constant nodes") {
  Rng rng(27);
  auto x = ad::leaf(Tensor<double>::randn({2, 2}, rng), true);
  {
    ad::NoGrad guard;
    auto y = ad::square(x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  auto y2 = ad::square(x);
  CHECK(y2->requires_grad);
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(28);
  auto x = ad::leaf(Tensor<double>::randn({3, 3}, rng), true);
  auto loss = ad::sum_all(ad::mul(ad::detach(x), x));
  ad::backward(loss);
  for (std::int64_t i = 0; i < x->val.size(); ++i) CHECK(x->grad[i] == doctest::Approx(x->val[i]));
}

TEST_CASE("backward requires a scalar root") {
  Rng rng(29);
  auto x = ad::leaf(Tensor<double>::randn({2, 2}, rng), true);
  auto y = ad::square(x);
  CHECK_THROWS_AS(ad::backward(y), ArgumentError);
}

TEST_CASE("gradient accumulates across reuse of a node") {
  auto x = ad::leaf(Tensor<double>::full({1}, 3.0), true);
  auto y = ad::add(ad::square(x), ad::scale(x, 2.0));  // x^2 + 2x
  ad::backward(y);
  CHECK(x->grad[0] == doctest::Approx(8.0));  // 2*3 + 2
}

TEST_CASE("sample_noise contract") {
  Rng a(7), b(7);
  auto z1 = sample_noise<double>(3, 8, a);
  auto z2 = sample_noise<double>(3, 8, b);
  REQUIRE(z1.shape() == Shape{3, 8});
  for (std::int64_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);
  CHECK_THROWS_AS(sample_noise<double>(0, 8, a), ArgumentError);
  CHECK_THROWS_AS(sample_noise<double>(3, 0, a), ArgumentError);

  Rng c(1);
  auto big = sample_noise<double>(10000, 8, c);
  for (int d = 0; d < 8; ++d) {
    double mean = 0, var = 0;
    for (int i = 0; i < 10000; ++i) mean += big[i * 8 + d];
    mean /= 10000;
    for (int i = 0; i < 10000; ++i) var += (big[i * 8 + d] - mean) * (big[i * 8 + d] - mean);
    var /= 9999;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
  }
}
