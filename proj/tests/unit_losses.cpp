#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "acl/losses.hpp"

using namespace acl;
using ad::Var;
using gan::LossReport;

namespace {

Var<double> cmap(double v, Shape s = {1, 1, 2, 2}) { return ad::constant(Tensor<double>::full(s, v)); }

std::vector<Var<double>> cmaps(double v) {
  // two scales with different spatial sizes
  return {cmap(v, {1, 1, 4, 4}), cmap(v, {1, 1, 2, 2})};
}

// Stub consistency scorer: returns a fixed value per candidate identity.
struct StubDhat {
  const ad::Node<double>* hat;
  double v_hat, v_tilde;
  std::vector<Var<double>> operator()(const Var<double>&, const Var<double>& cand) const {
    return cmaps(cand.get() == hat ? v_hat : v_tilde);
  }
};

Var<double> img(double v) { return ad::constant(Tensor<double>::full({1, 3, 2, 2}, v)); }

}  // namespace

TEST_CASE("lsgan_d hand values") {
  CHECK(gan::lsgan_d<double>(cmaps(1.0), {cmaps(0.0)})->val[0] == doctest::Approx(0.0));
  CHECK(gan::lsgan_d<double>(cmaps(0.5), {cmaps(0.5)})->val[0] == doctest::Approx(0.5));
  CHECK(gan::lsgan_d<double>(cmaps(1.0), {cmaps(0.0), cmaps(1.0)})->val[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(gan::lsgan_d<double>({}, {cmaps(0.0)}), ArgumentError);
  CHECK_THROWS_AS(gan::lsgan_d<double>(cmaps(1.0), {}), ArgumentError);
}

TEST_CASE("lsgan_g hand values") {
  CHECK(gan::lsgan_g<double>({cmaps(1.0)})->val[0] == doctest::Approx(0.0));
  CHECK(gan::lsgan_g<double>({cmaps(0.0)})->val[0] == doctest::Approx(1.0));
  CHECK(gan::lsgan_g<double>({cmaps(1.0), cmaps(0.0)})->val[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(gan::lsgan_g<double>({}), ArgumentError);
}

TEST_CASE("lsgan saddle structure: constant score c minimised at 0.5") {
  double best = 1e9, best_c = -1;
  for (double c = 0.0; c <= 1.0001; c += 0.05) {
    double v = gan::lsgan_d<double>(cmaps(c), {cmaps(c)})->val[0];
    CHECK(v == doctest::Approx((c - 1) * (c - 1) + c * c));
    if (v < best) {
      best = v;
      best_c = c;
    }
  }
  CHECK(best_c == doctest::Approx(0.5));
}

TEST_CASE("acl_d stub values") {
  auto xs = img(0.0), xhat = img(0.1), xtilde = img(0.2);
  StubDhat perfect{xhat.get(), 1.0, 0.0};
  CHECK(gan::acl_d(perfect, xs, xhat, xtilde)->val[0] == doctest::Approx(0.0));
  StubDhat half{xhat.get(), 0.5, 0.5};
  CHECK(gan::acl_d(half, xs, xhat, xtilde)->val[0] == doctest::Approx(0.5));
  CHECK(gan::acl_d(perfect, xs, xhat, xtilde, true)->val[0] == doctest::Approx(2.0));
  auto bad = ad::constant(Tensor<double>::zeros({1, 3, 4, 4}));
  CHECK_THROWS_AS(gan::acl_d(perfect, xs, xhat, bad), ArgumentError);
}

TEST_CASE("acl_g stub values") {
  auto xs = img(0.0), xhat = img(0.1), xtilde = img(0.2);
  StubDhat win{xhat.get(), 0.0, 1.0};
  CHECK(gan::acl_g(win, xs, xhat, xtilde)->val[0] == doctest::Approx(0.0));
  StubDhat half{xhat.get(), 0.5, 0.5};
  CHECK(gan::acl_g(half, xs, xhat, xtilde)->val[0] == doctest::Approx(0.5));
  StubDhat ones{xhat.get(), 1.0, 1.0};
  CHECK(gan::acl_g(ones, xs, xhat, xtilde)->val[0] == doctest::Approx(1.0));
}

TEST_CASE("identity loss hand values") {
  auto z = img(0.0);
  CHECK(gan::identity_loss(z, z, z, z)->val[0] == doctest::Approx(0.0));
  CHECK(gan::identity_loss(img(0.0), img(0.5), z, z)->val[0] == doctest::Approx(0.5));
  CHECK(gan::identity_loss(img(0.0), img(0.25), img(1.0), img(0.75))->val[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(gan::identity_loss(z, ad::constant(Tensor<double>::zeros({1, 3, 4, 4})), z, z), ArgumentError);
}

TEST_CASE("mask loss reproduces the hand-computed values") {
  Hyperparameters h;  // delta=0.001, eps=0.01, dmin=0.05, dmax=0.1
  auto m1 = ad::constant(Tensor<double>::full({1, 1, 2, 2}, 1.0));
  CHECK(gan::mask_loss<double>({m1}, h)->val[0] == doctest::Approx(1.96402).epsilon(0).scale(1).epsilon(1e-5));
  auto m0 = ad::constant(Tensor<double>::full({1, 1, 2, 2}, 0.0));
  CHECK(std::abs(gan::mask_loss<double>({m0}, h)->val[0] - 1.96079) < 1e-5);
  auto mh = ad::constant(Tensor<double>::full({1, 1, 2, 2}, 0.5));
  CHECK(std::abs(gan::mask_loss<double>({mh}, h)->val[0] - 100.00064) < 1e-3);

  Hyperparameters bad = h;
  bad.epsilon = -1;
  CHECK_THROWS_AS(gan::mask_loss<double>({m1}, bad), ConfigError);
  CHECK_THROWS_AS(gan::mask_loss<double>({}, h), ArgumentError);
}

TEST_CASE("mask loss is invariant under pixel permutation") {
  Hyperparameters h;
  Rng rng(5);
  auto vals = Tensor<double>::uniform({1, 1, 4, 4}, rng, 0, 1);
  Tensor<double> shuffled = vals;
  std::vector<int> perm(16);
  for (int i = 0; i < 16; ++i) perm[i] = i;
  rng.shuffle(perm);
  for (int i = 0; i < 16; ++i) shuffled[i] = vals[perm[i]];
  double a = gan::mask_loss<double>({ad::constant(vals)}, h)->val[0];
  double b = gan::mask_loss<double>({ad::constant(shuffled)}, h)->val[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("mask hinge terms vanish inside the size window") {
  Hyperparameters h;
  h.delta_min = 0.2;
  h.delta_max = 0.8;
  // constant mask with fraction f inside [dmin, dmax]: hinge = 0, so the
  // loss equals the binarisation term alone
  for (double f : {0.2, 0.5, 0.8}) {
    auto m = ad::constant(Tensor<double>::full({1, 1, 4, 4}, f));
    double loss = gan::mask_loss<double>({m}, h)->val[0];
    double binar = 1.0 / (std::abs(f - 0.5) + h.epsilon);
    CHECK(loss == doctest::Approx(binar).epsilon(1e-12));
  }
  // just outside the window the hinge activates
  auto over = ad::constant(Tensor<double>::full({1, 1, 4, 4}, 0.9));
  double expected_hinge = h.delta * std::pow(16 * 0.9 - 0.8 * 16, 2) / 16;
  double binar = 1.0 / (0.4 + h.epsilon);
  CHECK(gan::mask_loss<double>({over}, h)->val[0] == doctest::Approx(binar + expected_hinge).epsilon(1e-12));
}

TEST_CASE("total generator loss combines per Eq-7 weights") {
  Hyperparameters h;
  h.lambda_acl = 0.2;
  h.lambda_idt = 1.0;
  h.lambda_mask = 0.025;
  auto sc = [](double v) { return ad::constant(Tensor<double>::full({1}, v)); };
  auto r = gan::total_generator_loss<double>(sc(0.6), sc(0.4), sc(2.0), sc(3.0), sc(4.0), h);
  CHECK(r.report.total == doctest::Approx(1.0 + 0.4 + 3.0 + 0.1));
  CHECK(r.value->val[0] == doctest::Approx(r.report.total).epsilon(1e-12));

  auto zero = gan::total_generator_loss<double>(sc(0), sc(0), sc(0), sc(0), sc(0), h);
  CHECK(zero.report.total == 0.0);

  Hyperparameters abl = h;
  abl.disable_acl = true;
  auto r2 = gan::total_generator_loss<double>(sc(0.6), sc(0.4), sc(99.0), sc(3.0), sc(4.0), abl);
  CHECK(r2.report.acl == 0.0);
  CHECK(r2.report.total == doctest::Approx(1.0 + 3.0 + 0.1));

  // linear in each lambda
  Hyperparameters h2 = h;
  h2.lambda_acl = 2 * h.lambda_acl;
  auto ra = gan::total_generator_loss<double>(sc(0), sc(0), sc(2.0), Var<double>{}, Var<double>{}, h);
  auto rb = gan::total_generator_loss<double>(sc(0), sc(0), sc(2.0), Var<double>{}, Var<double>{}, h2);
  CHECK(rb.report.total == doctest::Approx(2 * ra.report.total));

  auto nan = sc(std::nan(""));
  CHECK_THROWS_AS(gan::total_generator_loss<double>(nan, sc(0), sc(0), sc(0), sc(0), h), NumericalError);
}

TEST_CASE("losses are nonnegative on random stub scores") {
  Rng rng(17);
  for (int t = 0; t < 25; ++t) {
    auto rmap = std::vector<Var<double>>{ad::constant(Tensor<double>::uniform({1, 1, 3, 3}, rng, -2, 2))};
    auto fmap = std::vector<Var<double>>{ad::constant(Tensor<double>::uniform({1, 1, 3, 3}, rng, -2, 2))};
    CHECK(gan::lsgan_d<double>(rmap, {fmap})->val[0] >= 0.0);
    CHECK(gan::lsgan_g<double>({fmap})->val[0] >= 0.0);
    auto a = ad::constant(Tensor<double>::uniform({1, 3, 2, 2}, rng, -1, 1));
    auto b = ad::constant(Tensor<double>::uniform({1, 3, 2, 2}, rng, -1, 1));
    CHECK(gan::identity_loss(a, b, a, b)->val[0] >= 0.0);
    Hyperparameters h;
    auto m = ad::constant(Tensor<double>::uniform({2, 1, 3, 3}, rng, 0, 1));
    CHECK(gan::mask_loss<double>({m}, h)->val[0] >= 0.0);
  }
}

TEST_CASE("loss gradients flow to inputs") {
  Rng rng(23);
  auto maps = std::vector<Var<double>>{ad::leaf(Tensor<double>::uniform({1, 1, 3, 3}, rng, -1, 1), true)};
  auto loss = gan::lsgan_g<double>({maps});
  ad::backward(loss);
  // d/ds mean((s-1)^2) = 2(s-1)/n
  for (std::int64_t i = 0; i < maps[0]->val.size(); ++i)
    CHECK(maps[0]->grad[i] == doctest::Approx(2 * (maps[0]->val[i] - 1) / 9.0).epsilon(1e-10));

  auto m = ad::leaf(Tensor<double>::uniform({1, 1, 3, 3}, rng, 0.15, 0.45), true);
  Hyperparameters h;
  auto ml = gan::mask_loss<double>({m}, h);
  ad::backward(ml);
  for (std::int64_t i = 0; i < m->val.size(); ++i) CHECK(std::isfinite(m->grad[i]));
}
