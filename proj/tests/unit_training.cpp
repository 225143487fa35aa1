#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "acl/train.hpp"

using namespace acl;
using ad::Var;
using gan::TranslationBundle;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("aclgan_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Generator stub: output = input, mask = 1 everywhere.
struct IdentityGen {
  std::int64_t d_z = 4;
  net::GeneratorOut<float> forward(const Var<float>& x, const Var<float>&) const {
    net::GeneratorOut<float> out;
    out.rgb = x;
    out.mask = ad::constant(Tensor<float>::full({x->val.dim(0), 1, x->val.dim(2), x->val.dim(3)}, 1.0f));
    return out;
  }
  Var<float> encode_noise(const Var<float>& x) const {
    return ad::constant(Tensor<float>::zeros({x->val.dim(0), d_z}));
  }
};

// Discriminator stub scoring by node identity: `real` nodes get v_real,
// everything else v_fake. No parameters.
struct StubDisc {
  nn::ParamStore<float> ps;
  std::vector<const ad::Node<float>*> reals;
  double v_real = 1.0, v_fake = 0.0;

  bool is_real(const Var<float>& x) const {
    for (auto* r : reals)
      if (r == x.get()) return true;
    return false;
  }
  std::vector<Var<float>> forward(const Var<float>& x) const {
    return {ad::constant(Tensor<float>::full({x->val.dim(0), 1, 2, 2}, static_cast<float>(is_real(x) ? v_real : v_fake)))};
  }
  std::vector<Var<float>> forward_pair(const Var<float>&, const Var<float>& cand) const { return forward(cand); }
  nn::ParamStore<float>& params() { return ps; }
};

RunConfig tiny_config() {
  RunConfig c = run_config_preset("toy");
  c.base_channels = 4;
  c.n_res_blocks = 1;
  c.n_scales = 1;
  c.n_layers = 2;
  c.n_style_downsample = 2;
  c.image_size = 16;
  c.load_size = 16;
  c.h.batch_size = 2;
  c.h.total_iters = 30;
  c.h.d_z = 4;
  c.threads = 1;
  c.log_every = 10;
  c.ckpt_every = 10;
  c.sample_every = 10000;
  c.preset.clear();
  c.validate();
  return c;
}

gan::MemorySource tiny_source(std::uint64_t seed) {
  gan::MemorySource src;
  data::ToySpec spec;
  spec.image_size = 16;
  spec.n_per_domain = 6;
  Rng rs = Rng::derive(seed, 91), rt = Rng::derive(seed, 92);
  for (int i = 0; i < 6; ++i) {
    src.s.push_back(data::render_toy_sample(spec, true, rs).image);
    src.t.push_back(data::render_toy_sample(spec, false, rt).image);
  }
  return src;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  Hyperparameters h;  // lr0 1e-4, halve every 100K
  CHECK(gan::lr_at(0, h) == doctest::Approx(1e-4));
  CHECK(gan::lr_at(99999, h) == doctest::Approx(1e-4));
  CHECK(gan::lr_at(100000, h) == doctest::Approx(5e-5));
  CHECK(gan::lr_at(250000, h) == doctest::Approx(2.5e-5));
  CHECK_THROWS_AS(gan::lr_at(-1, h), ArgumentError);
}

TEST_CASE("translation graph wiring with identity stubs") {
  IdentityGen gs, gt;
  Rng data_rng(5);
  auto xs = Tensor<float>::uniform({3, 3, 16, 16}, data_rng, -1, 1);
  auto xt = Tensor<float>::uniform({3, 3, 16, 16}, data_rng, -1, 1);
  Rng nr(7);
  auto b = gan::build_translation_graph<float>(gs, gt, xs, xt, nr, 4, true, true);
  for (std::int64_t i = 0; i < xs.size(); ++i) {
    CHECK(b.x_bar_t->val[i] == xs[i]);
    CHECK(b.x_hat_s->val[i] == xs[i]);
    CHECK(b.x_tilde_s->val[i] == xs[i]);
    CHECK(b.x_idt_s->val[i] == xs[i]);
    CHECK(b.x_idt_t->val[i] == xt[i]);
  }
  CHECK(b.masks.size() == 5);
  CHECK(b.has_identity);

  // shape contract on every member
  for (const auto& v : {b.x_bar_t, b.x_hat_s, b.x_tilde_s, b.x_idt_s, b.x_idt_t})
    CHECK(v->val.shape() == Shape{3, 3, 16, 16});
  CHECK(b.z1->val.shape() == Shape{3, 4});

  // identical seed, identical bundle
  Rng nr2(7);
  auto b2 = gan::build_translation_graph<float>(gs, gt, xs, xt, nr2, 4, true, true);
  for (std::int64_t i = 0; i < b.z1->val.size(); ++i) CHECK(b.z1->val[i] == b2.z1->val[i]);
  for (std::int64_t i = 0; i < xs.size(); ++i) CHECK(b.x_hat_s->val[i] == b2.x_hat_s->val[i]);

  CHECK_THROWS_AS(gan::build_translation_graph<float>(gs, gt, xs, Tensor<float>::zeros({3, 3, 8, 8}), nr, 4, true,
                                                      true),
                  ArgumentError);
}

TEST_CASE("discriminator step leaves generators untouched and stubs reach the fixed point") {
  RunConfig cfg = tiny_config();
  Rng init(3);
  net::Generator<float> gs(cfg.generator_config(), init), gt(cfg.generator_config(), init);
  Rng nr(11), dr(13);
  auto xs = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);
  auto xt = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);

  TranslationBundle<float> bundle;
  {
    ad::NoGrad detached;
    bundle = gan::build_translation_graph<float>(gs, gt, xs, xt, nr, cfg.h.d_z, true, false);
  }
  std::uint64_t gs_sum = gs.params().checksum(), gt_sum = gt.params().checksum();

  SUBCASE("real discriminators update; losses positive and finite") {
    net::Discriminator<float> ds(cfg.discriminator_config(false), init), dt(cfg.discriminator_config(false), init),
        dh(cfg.discriminator_config(true), init);
    std::vector<Var<float>> dparams;
    for (auto* s : {&ds.params(), &dt.params(), &dh.params()})
      for (const auto& [n, p] : s->items()) dparams.push_back(p);
    gan::Adam<float> opt(dparams, 0.5, 0.999);
    std::uint64_t ds_sum = ds.params().checksum();
    auto rep = gan::discriminator_step(bundle, ds, dt, dh, opt, cfg.h, 1e-4);
    CHECK(gs.params().checksum() == gs_sum);
    CHECK(gt.params().checksum() == gt_sum);
    CHECK(ds.params().checksum() != ds_sum);
    CHECK(std::isfinite(rep.total));
    CHECK(rep.adv_t > 0);
    CHECK(rep.adv_s > 0);
    CHECK(rep.acl > 0);
    CHECK(rep.total == doctest::Approx(rep.adv_t + rep.adv_s + cfg.h.lambda_acl * rep.acl).epsilon(1e-9));
  }

  SUBCASE("perfect stub discriminators yield zero losses and no movement") {
    StubDisc ds, dt, dh;
    ds.reals = {bundle.x_s.get()};
    dt.reals = {bundle.x_t.get()};
    dh.reals = {bundle.x_hat_s.get()};
    gan::Adam<float> opt({}, 0.5, 0.999);
    auto rep = gan::discriminator_step(bundle, ds, dt, dh, opt, cfg.h, 1e-4);
    CHECK(rep.adv_t == doctest::Approx(0.0));
    CHECK(rep.adv_s == doctest::Approx(0.0));
    CHECK(rep.acl == doctest::Approx(0.0));
    CHECK(rep.total == doctest::Approx(0.0));
    CHECK(gs.params().checksum() == gs_sum);
  }
}

TEST_CASE("generator step freezes discriminators and satisfies the Eq-7 identity") {
  RunConfig cfg = tiny_config();
  Rng init(23);
  net::Generator<float> gs(cfg.generator_config(), init), gt(cfg.generator_config(), init);
  net::Discriminator<float> ds(cfg.discriminator_config(false), init), dt(cfg.discriminator_config(false), init),
      dh(cfg.discriminator_config(true), init);
  Rng nr(29), dr(31);
  auto xs = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);
  auto xt = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);
  auto bundle = gan::build_translation_graph<float>(gs, gt, xs, xt, nr, cfg.h.d_z, true, true);

  std::vector<Var<float>> gparams;
  for (auto* s : {&gs.params(), &gt.params()})
    for (const auto& [n, p] : s->items()) gparams.push_back(p);
  gan::Adam<float> opt(gparams, 0.5, 0.999);

  std::uint64_t ds_sum = ds.params().checksum(), dt_sum = dt.params().checksum(), dh_sum = dh.params().checksum();
  std::uint64_t gs_sum = gs.params().checksum();
  auto rep = gan::generator_step(bundle, gs, gt, ds, dt, dh, opt, cfg.h, 1e-4);
  CHECK(ds.params().checksum() == ds_sum);
  CHECK(dt.params().checksum() == dt_sum);
  CHECK(dh.params().checksum() == dh_sum);
  CHECK(gs.params().checksum() != gs_sum);
  double recomputed = rep.adv_t + rep.adv_s + cfg.h.lambda_acl * rep.acl + cfg.h.lambda_idt * rep.idt +
                      cfg.h.lambda_mask * rep.mask;
  CHECK(std::abs(rep.total - recomputed) < 1e-9);
  // discriminators must require grad again after the freeze guard exits
  CHECK(ds.params().items()[0].second->requires_grad);
}

TEST_CASE("zero-loss fixed point leaves generator weights unchanged") {
  RunConfig cfg = tiny_config();
  cfg.h.disable_acl = true;
  cfg.h.disable_idt = true;
  cfg.h.use_mask = false;
  cfg.h.lambda_mask = 0.0;
  Rng init(37);
  net::Generator<float> gs(cfg.generator_config(), init), gt(cfg.generator_config(), init);
  Rng nr(41), dr(43);
  auto xs = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);
  auto xt = Tensor<float>::uniform({2, 3, 16, 16}, dr, -1, 1);
  auto bundle = gan::build_translation_graph<float>(gs, gt, xs, xt, nr, cfg.h.d_z, false, false);

  StubDisc ds, dt, dh;  // score 1 for everything: generator loss is exactly 0
  ds.v_fake = dt.v_fake = dh.v_fake = 1.0;
  std::vector<Var<float>> gparams;
  for (auto* s : {&gs.params(), &gt.params()})
    for (const auto& [n, p] : s->items()) gparams.push_back(p);
  gan::Adam<float> opt(gparams, 0.5, 0.999);
  std::uint64_t gs_sum = gs.params().checksum(), gt_sum = gt.params().checksum();
  auto rep = gan::generator_step(bundle, gs, gt, ds, dt, dh, opt, cfg.h, 1e-4);
  CHECK(rep.total == doctest::Approx(0.0));
  CHECK(gs.params().checksum() == gs_sum);
  CHECK(gt.params().checksum() == gt_sum);
}

TEST_CASE("update-ratio counters and deterministic replay") {
  RunConfig cfg = tiny_config();
  auto src = tiny_source(17);

  gan::Trainer<float> t1(cfg, 99);
  t1.set_source(&src);
  t1.train_one_iteration();
  CHECK(t1.d_step_count() == 2);
  CHECK(t1.g_step_count() == 1);
  CHECK(t1.iteration() == 1);

  for (int i = 0; i < 4; ++i) t1.train_one_iteration();

  gan::Trainer<float> t2(cfg, 99);
  t2.set_source(&src);
  for (int i = 0; i < 5; ++i) t2.train_one_iteration();

  CHECK(t1.gen_s().params().checksum() == t2.gen_s().params().checksum());
  CHECK(t1.gen_t().params().checksum() == t2.gen_t().params().checksum());
  CHECK(t1.dis_s().params().checksum() == t2.dis_s().params().checksum());
  CHECK(t1.dis_hat().params().checksum() == t2.dis_hat().params().checksum());

  gan::Trainer<float> t3(cfg, 100);
  t3.set_source(&src);
  t3.train_one_iteration();
  bool differs = t3.gen_s().params().checksum() != t2.gen_s().params().checksum();
  CHECK(differs);
}

TEST_CASE("checkpoint round trip resumes bit-exactly") {
  RunConfig cfg = tiny_config();
  auto src = tiny_source(23);
  fs::path dir = fresh_dir("ckpt");

  gan::Trainer<float> a(cfg, 7);
  a.set_source(&src);
  for (int i = 0; i < 3; ++i) a.train_one_iteration();
  a.save_checkpoint(dir / "mid");
  for (int i = 0; i < 3; ++i) a.train_one_iteration();

  auto b = gan::Trainer<float>::from_checkpoint(dir / "mid");
  b->set_source(&src);
  CHECK(b->iteration() == 3);
  for (int i = 0; i < 3; ++i) b->train_one_iteration();

  CHECK(a.iteration() == b->iteration());
  CHECK(a.gen_s().params().checksum() == b->gen_s().params().checksum());
  CHECK(a.gen_t().params().checksum() == b->gen_t().params().checksum());
  CHECK(a.dis_s().params().checksum() == b->dis_s().params().checksum());
  CHECK(a.dis_t().params().checksum() == b->dis_t().params().checksum());
  CHECK(a.dis_hat().params().checksum() == b->dis_hat().params().checksum());
  CHECK(a.d_step_count() == b->d_step_count());

  // a second save of the resumed trainer matches a fresh save of the original
  a.save_checkpoint(dir / "full_a");
  b->save_checkpoint(dir / "full_b");
  auto wa = io::read_blob<float>(dir / "full_a" / "g_s.bin");
  auto wb = io::read_blob<float>(dir / "full_b" / "g_s.bin");
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i)
    for (std::int64_t k = 0; k < wa[i].second.size(); ++k) CHECK(wa[i].second[k] == wb[i].second[k]);

  CHECK_THROWS_AS(gan::Trainer<float>::from_checkpoint(dir / "nope"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("non-finite losses abort loudly") {
  RunConfig cfg = tiny_config();
  auto src = tiny_source(31);
  gan::Trainer<float> t(cfg, 3);
  t.set_source(&src);
  t.train_one_iteration();
  t.gen_t().params().items()[0].second->val[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(t.train_one_iteration(), NumericalError);
}

TEST_CASE("translate is deterministic per seed and multi-modal across styles") {
  RunConfig cfg = tiny_config();
  auto src = tiny_source(37);
  gan::Trainer<float> t(cfg, 5);
  t.set_source(&src);
  t.train_one_iteration();

  data::ImageU8 input = src.s[0];
  auto out1 = t.translate(input, 2, 77);
  auto out2 = t.translate(input, 2, 77);
  REQUIRE(out1.size() == 2);
  CHECK(out1[0].has_mask);
  CHECK(out1[0].image.px == out2[0].image.px);
  CHECK(out1[1].image.px == out2[1].image.px);
  CHECK(out1[0].image.px != out1[1].image.px);

  auto other = t.translate(input, 1, 78);
  CHECK(other[0].image.px != out1[0].image.px);
  CHECK_THROWS_AS(t.translate(input, 0, 1), ArgumentError);
}

TEST_CASE("trainer writes resolved config, loss log, and checkpoints") {
  RunConfig cfg = tiny_config();
  cfg.h.total_iters = 10;
  auto src = tiny_source(41);
  fs::path dir = fresh_dir("run");
  gan::Trainer<float> t(cfg, 13);
  t.set_source(&src);
  t.set_out_dir(dir);
  t.run();
  CHECK(fs::exists(dir / "config_resolved.json"));
  CHECK(fs::exists(dir / "loss_log.jsonl"));
  CHECK(fs::exists(dir / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(dir / "checkpoint" / "g_t.bin"));
  auto resumed = gan::Trainer<float>::from_checkpoint(dir / "checkpoint");
  CHECK(resumed->iteration() == 10);
  fs::remove_all(dir);
}
