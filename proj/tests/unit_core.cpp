#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "acl/core.hpp"
#include "acl/hparams.hpp"

using namespace acl;

TEST_CASE("composite_with_mask identity cases") {
  Rng rng(3);
  auto raw = Tensor<double>::uniform({3, 4, 4}, rng, -1, 1);
  auto src = Tensor<double>::uniform({3, 4, 4}, rng, -1, 1);

  auto ones = Tensor<double>::full({1, 4, 4}, 1.0);
  auto out1 = composite_with_mask(raw, ones, src);
  for (std::int64_t i = 0; i < out1.size(); ++i) CHECK(out1[i] == raw[i]);

  auto zeros = Tensor<double>::zeros({1, 4, 4});
  auto out0 = composite_with_mask(raw, zeros, src);
  for (std::int64_t i = 0; i < out0.size(); ++i) CHECK(out0[i] == src[i]);

  auto half = Tensor<double>::full({1, 4, 4}, 0.5);
  auto r1 = Tensor<double>::full({3, 4, 4}, 1.0);
  auto s0 = Tensor<double>::zeros({3, 4, 4});
  auto mid = composite_with_mask(r1, half, s0);
  for (std::int64_t i = 0; i < mid.size(); ++i) CHECK(mid[i] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("composite_with_mask is affine in the mask and preserves range") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto raw = Tensor<double>::uniform({3, 3, 5}, rng, -1, 1);
    auto src = Tensor<double>::uniform({3, 3, 5}, rng, -1, 1);
    auto m1 = Tensor<double>::uniform({1, 3, 5}, rng, 0, 1);
    auto m2 = Tensor<double>::uniform({1, 3, 5}, rng, 0, 1);
    double alpha = rng.uniform();
    Tensor<double> mix({1, 3, 5});
    for (std::int64_t i = 0; i < mix.size(); ++i) mix[i] = alpha * m1[i] + (1 - alpha) * m2[i];

    auto o1 = composite_with_mask(raw, m1, src);
    auto o2 = composite_with_mask(raw, m2, src);
    auto om = composite_with_mask(raw, mix, src);
    for (std::int64_t i = 0; i < om.size(); ++i) {
      CHECK(std::abs(om[i] - (alpha * o1[i] + (1 - alpha) * o2[i])) < 1e-12);
      CHECK(om[i] >= -1.0 - 1e-12);
      CHECK(om[i] <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("composite_with_mask rejects bad inputs") {
  auto raw = Tensor<double>::zeros({3, 4, 4});
  auto src = Tensor<double>::zeros({3, 4, 4});
  CHECK_THROWS_AS(composite_with_mask(raw, Tensor<double>::zeros({1, 4, 5}), src), ArgumentError);
  CHECK_THROWS_AS(composite_with_mask(raw, Tensor<double>::zeros({3, 4, 4}), src), ArgumentError);
  CHECK_THROWS_AS(composite_with_mask(raw, Tensor<double>::full({1, 4, 4}, 1.5), src), ArgumentError);
  CHECK_THROWS_AS(composite_with_mask(Tensor<double>::zeros({3, 4, 5}), Tensor<double>::zeros({1, 4, 4}), src),
                  ArgumentError);
}

TEST_CASE("hyperparameter presets carry the per-application settings") {
  auto g = hparams_preset("glasses-removal");
  CHECK(g.lambda_acl == 0.2);
  CHECK(g.lambda_mask == 0.025);
  CHECK(g.delta_min == 0.05);
  CHECK(g.delta_max == 0.1);
  CHECK(g.lambda_idt == 1.0);
  CHECK(g.delta == 0.001);
  CHECK(g.epsilon == 0.01);
  CHECK(g.lr0 == 1e-4);
  CHECK(g.betas.first == 0.5);
  CHECK(g.betas.second == 0.999);
  CHECK(g.batch_size == 3);
  CHECK(g.d_updates_per_g == 2);

  auto m = hparams_preset("male-to-female");
  CHECK(m.delta_min == 0.3);
  CHECK(m.delta_max == 0.5);

  auto a = hparams_preset("selfie-to-anime");
  CHECK(a.lambda_acl == 0.5);
  CHECK(a.lambda_mask == 0.0);
  CHECK(a.delta_min == 0.0);
  CHECK(a.delta_max == 0.0);
  CHECK_FALSE(a.use_mask);

  CHECK_THROWS_AS(hparams_preset("nope"), ConfigError);
}

TEST_CASE("hyperparameter validation names the violated field") {
  Hyperparameters h;
  h.delta_min = 0.5;
  h.delta_max = 0.1;
  try {
    validate_hparams(h);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "delta_min");
  }

  Hyperparameters h2;
  h2.epsilon = 0.0;
  try {
    validate_hparams(h2);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "epsilon");
  }

  Hyperparameters h3;
  h3.use_mask = false;
  h3.lambda_mask = 0.025;
  CHECK_THROWS_AS(validate_hparams(h3), ConfigError);
  h3.lambda_mask = 0.0;
  CHECK_NOTHROW(validate_hparams(h3));
}

TEST_CASE("hyperparameter JSON is strict and round-trips") {
  auto h = hparams_preset("male-to-female");
  h.swap_acl_labels = true;
  auto text = hparams_to_json(h);
  auto back = hparams_from_json(text);
  CHECK(back.delta_min == h.delta_min);
  CHECK(back.swap_acl_labels);
  CHECK(hparams_hash(back) == hparams_hash(h));

  CHECK_THROWS_AS(hparams_from_json("{\"lambda_ac1\": 0.2}"), ConfigError);
  CHECK_THROWS_AS(hparams_from_json("{\"lambda_acl\": \"x\"}"), ConfigError);
  CHECK_THROWS_AS(hparams_from_json("not json"), ConfigError);

  auto low = hparams_from_json("{\"lambda_acl\": 0.7}");
  CHECK(low.lambda_acl == 0.7);
  CHECK(low.lambda_idt == 1.0);
  CHECK(hparams_hash(low) != hparams_hash(h));
}

TEST_CASE("different seeds give different noise") {
  Rng a(1), b(2);
  auto za = sample_noise<double>(4, 8, a);
  auto zb = sample_noise<double>(4, 8, b);
  bool differ = false;
  for (std::int64_t i = 0; i < za.size(); ++i) differ = differ || za[i] != zb[i];
  CHECK(differ);
}
