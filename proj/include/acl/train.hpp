#pragma once

// Training machinery: Adam, the translation graph of one training step,
// the two-discriminator-updates-per-generator-update loop, checkpointing
// with lossless resume, and noise-conditioned inference.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "acl/blob.hpp"
#include "acl/core.hpp"
#include "acl/data.hpp"
#include "acl/losses.hpp"
#include "acl/networks.hpp"
#include "acl/run_config.hpp"

namespace acl::gan {

using ad::Var;

// lr(i) = lr0 * 0.5^floor(i / halve_every)
inline double lr_at(std::int64_t iteration, const Hyperparameters& h) {
  if (iteration < 0) throw ArgumentError("lr_at: negative iteration");
  return h.lr0 * std::pow(0.5, static_cast<double>(iteration / h.lr_halve_every));
}

// ---------------------------------------------------------------------------

template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Var<T>> params, double beta1, double beta2, double eps = 1e-8)
      : params_(std::move(params)), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) slots_.push_back({Tensor<T>(p->val.shape()), Tensor<T>(p->val.shape())});
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& m = slots_[i].m;
      auto& v = slots_[i].v;
      const bool has_grad = p->grad_ready;
      T* pd = p->val.data();
      const T* g = has_grad ? p->grad.data() : nullptr;
      std::int64_t n = p->val.size();
      for (std::int64_t k = 0; k < n; ++k) {
        double gk = g ? static_cast<double>(g[k]) : 0.0;
        double mk = b1_ * static_cast<double>(m[k]) + (1 - b1_) * gk;
        double vk = b2_ * static_cast<double>(v[k]) + (1 - b2_) * gk * gk;
        m[k] = static_cast<T>(mk);
        v[k] = static_cast<T>(vk);
        pd[k] -= static_cast<T>(lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps_));
      }
    }
  }

  std::int64_t t() const { return t_; }

  void save(const std::filesystem::path& path) const {
    std::vector<std::pair<std::string, const Tensor<T>*>> items;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      items.emplace_back("m." + params_[i]->name, &slots_[i].m);
      items.emplace_back("v." + params_[i]->name, &slots_[i].v);
    }
    io::write_blob(path, items);
  }

  void load(const std::filesystem::path& path, std::int64_t t) {
    auto items = io::read_blob<T>(path);
    if (items.size() != 2 * params_.size()) throw IoError("optimizer state size mismatch in " + path.string());
    std::size_t j = 0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      for (auto* dst : {&slots_[i].m, &slots_[i].v}) {
        auto& [name, tens] = items[j++];
        std::string want = (dst == &slots_[i].m ? "m." : "v.") + params_[i]->name;
        if (name != want || !tens.same_shape(*dst))
          throw IoError("optimizer state entry mismatch: got " + name + ", expected " + want);
        *dst = std::move(tens);
      }
    }
    t_ = t;
  }

 private:
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<Var<T>> params_;
  std::vector<Slot> slots_;
  double b1_ = 0.5, b2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

// Scoped requires_grad=false over whole parameter stores.
template <class T>
class FreezeParams {
 public:
  explicit FreezeParams(std::vector<nn::ParamStore<T>*> stores) {
    for (auto* s : stores)
      for (const auto& [name, p] : s->items()) {
        saved_.emplace_back(p, p->requires_grad);
        p->requires_grad = false;
      }
  }
  ~FreezeParams() {
    for (auto& [p, flag] : saved_) p->requires_grad = flag;
  }
  FreezeParams(const FreezeParams&) = delete;

 private:
  std::vector<std::pair<Var<T>, bool>> saved_;
};

// ---------------------------------------------------------------------------
// One training step's data flow (Fig. 2 wiring).

template <class T>
struct TranslationBundle {
  Var<T> x_s, x_t;
  Var<T> z1, z2, z3;
  Var<T> x_bar_t, x_hat_s, x_tilde_s;
  Var<T> x_idt_s, x_idt_t;
  std::vector<Var<T>> masks;
  bool has_identity = false;
};

// Builds the chain x_bar_T = G_T(x_S,z1); x_hat_S = G_S(x_bar_T,z2);
// x_tilde_S = G_S(x_S,z3), compositing each output with its own input
// when masks are in play, plus the two identity paths on request.
// Runs in the caller's grad mode: wrap in ad::NoGrad for detached bundles.
template <class T, class GS, class GT>
TranslationBundle<T> build_translation_graph(const GS& g_s, const GT& g_t, const Tensor<T>& x_s_batch,
                                             const Tensor<T>& x_t_batch, Rng& noise_rng, std::int64_t d_z,
                                             bool use_mask, bool with_identity) {
  if (x_s_batch.ndim() != 4 || !(x_s_batch.shape() == x_t_batch.shape()))
    throw ArgumentError("build_translation_graph: batches must be NCHW with matching shapes");
  std::int64_t n = x_s_batch.dim(0);

  TranslationBundle<T> b;
  b.x_s = ad::constant(x_s_batch);
  b.x_t = ad::constant(x_t_batch);
  b.z1 = ad::constant(sample_noise<T>(n, d_z, noise_rng));
  b.z2 = ad::constant(sample_noise<T>(n, d_z, noise_rng));
  b.z3 = ad::constant(sample_noise<T>(n, d_z, noise_rng));

  auto apply = [&](const auto& gen, const Var<T>& x, const Var<T>& z) -> Var<T> {
    auto out = gen.forward(x, z);
    if (!use_mask) return out.rgb;
    if (!out.mask) throw ConfigError("use_mask", "generator was built without a mask head");
    b.masks.push_back(out.mask);
    return ad::composite(out.rgb, out.mask, x);
  };

  b.x_bar_t = apply(g_t, b.x_s, b.z1);
  b.x_hat_s = apply(g_s, b.x_bar_t, b.z2);
  b.x_tilde_s = apply(g_s, b.x_s, b.z3);
  if (with_identity) {
    b.x_idt_s = apply(g_s, b.x_s, g_s.encode_noise(b.x_s));
    b.x_idt_t = apply(g_t, b.x_t, g_t.encode_noise(b.x_t));
    b.has_identity = true;
  }
  return b;
}

namespace detail {
inline void check_finite(const char* what, double v, std::int64_t iteration) {
  if (!std::isfinite(v))
    throw NumericalError(std::string(what) + " became non-finite at iteration " + std::to_string(iteration));
}
}  // namespace detail

// One joint update of D_S, D_T and the consistency discriminator. The
// bundle must have been built under ad::NoGrad so generator outputs are
// constants.
template <class T, class DS, class DT, class DH>
LossReport discriminator_step(const TranslationBundle<T>& b, DS& d_s, DT& d_t, DH& d_hat, Adam<T>& opt,
                              const Hyperparameters& h, double lr, std::int64_t iteration = 0) {
  auto l_t = lsgan_d<T>(d_t.forward(b.x_t), {d_t.forward(b.x_bar_t)});
  auto l_s = lsgan_d<T>(d_s.forward(b.x_s), {d_s.forward(b.x_hat_s), d_s.forward(b.x_tilde_s)});
  Var<T> l_acl;
  if (!h.disable_acl && h.eff_lambda_acl() > 0)
    l_acl = acl_d([&](const Var<T>& a, const Var<T>& c) { return d_hat.forward_pair(a, c); }, b.x_s, b.x_hat_s,
                  b.x_tilde_s, h.swap_acl_labels);

  LossReport rep;
  rep.iteration = iteration;
  rep.lr = lr;
  rep.adv_t = static_cast<double>(l_t->val[0]);
  rep.adv_s = static_cast<double>(l_s->val[0]);
  rep.acl = l_acl ? static_cast<double>(l_acl->val[0]) : 0.0;
  rep.total = rep.adv_t + rep.adv_s + h.eff_lambda_acl() * rep.acl;
  detail::check_finite("discriminator loss", rep.total, iteration);

  Var<T> total = ad::add(l_t, l_s);
  if (l_acl) total = ad::add(total, ad::scale(l_acl, h.eff_lambda_acl()));
  opt.zero_grad();
  if (total->requires_grad) ad::backward(total);
  opt.step(lr);
  return rep;
}

// One generator update against frozen discriminators. The bundle must have
// been built with gradients enabled (and identity paths when identity loss
// is active).
template <class T, class GS, class GT, class DS, class DT, class DH>
LossReport generator_step(const TranslationBundle<T>& b, GS& g_s, GT& g_t, DS& d_s, DT& d_t, DH& d_hat, Adam<T>& opt,
                          const Hyperparameters& h, double lr, std::int64_t iteration = 0) {
  FreezeParams<T> freeze({&d_s.params(), &d_t.params(), &d_hat.params()});
  (void)g_s;
  (void)g_t;

  Var<T> adv_t = lsgan_g<T>({d_t.forward(b.x_bar_t)});
  Var<T> adv_s = lsgan_g<T>({d_s.forward(b.x_hat_s), d_s.forward(b.x_tilde_s)});
  Var<T> acl;
  if (!h.disable_acl && h.eff_lambda_acl() > 0)
    acl = acl_g([&](const Var<T>& a, const Var<T>& c) { return d_hat.forward_pair(a, c); }, b.x_s, b.x_hat_s,
                b.x_tilde_s, h.swap_acl_labels);
  Var<T> idt;
  if (!h.disable_idt && h.eff_lambda_idt() > 0) {
    if (!b.has_identity) throw ArgumentError("generator_step: identity loss requires identity paths in the bundle");
    idt = identity_loss(b.x_s, b.x_idt_s, b.x_t, b.x_idt_t);
  }
  Var<T> mask;
  if (h.mask_enabled() && h.eff_lambda_mask() > 0) mask = mask_loss(b.masks, h);

  auto tot = total_generator_loss(adv_t, adv_s, acl, idt, mask, h);
  tot.report.iteration = iteration;
  tot.report.lr = lr;
  detail::check_finite("generator loss", tot.report.total, iteration);
  opt.zero_grad();
  if (tot.value->requires_grad) ad::backward(tot.value);
  opt.step(lr);
  return tot.report;
}

// ---------------------------------------------------------------------------
// Data feeding: anything that can hand out images by (domain, index).

struct BatchSource {
  virtual ~BatchSource() = default;
  virtual std::size_t size(data::Domain d) const = 0;
  virtual data::ImageU8 get(data::Domain d, std::size_t index) const = 0;
};

struct DatasetSource final : BatchSource {
  const data::UnpairedDataset* ds;
  explicit DatasetSource(const data::UnpairedDataset* ds) : ds(ds) {}
  std::size_t size(data::Domain d) const override { return ds->size(d); }
  data::ImageU8 get(data::Domain d, std::size_t index) const override { return ds->load(d, index); }
};

struct MemorySource final : BatchSource {
  std::vector<data::ImageU8> s, t;
  std::size_t size(data::Domain d) const override { return d == data::Domain::S ? s.size() : t.size(); }
  data::ImageU8 get(data::Domain d, std::size_t index) const override {
    return d == data::Domain::S ? s.at(index) : t.at(index);
  }
};

// Reshuffled cycling through one domain. The permutation of epoch e is a
// pure function of (seed, domain, e), so resume only needs (epoch, pos).
struct DomainSampler {
  std::int64_t epoch = 0, pos = 0;

  std::vector<std::size_t> next(std::size_t count, std::size_t n_items, std::uint64_t seed, std::uint64_t tag) {
    if (n_items == 0) throw DatasetError("empty domain");
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (perm_.size() != n_items || perm_epoch_ != epoch) rebuild(n_items, seed, tag);
      if (pos >= static_cast<std::int64_t>(n_items)) {
        ++epoch;
        pos = 0;
        rebuild(n_items, seed, tag);
      }
      out.push_back(perm_[static_cast<std::size_t>(pos++)]);
    }
    return out;
  }

 private:
  void rebuild(std::size_t n_items, std::uint64_t seed, std::uint64_t tag) {
    perm_.resize(n_items);
    for (std::size_t i = 0; i < n_items; ++i) perm_[i] = i;
    Rng r = Rng::derive(seed ^ (0x5eedu + static_cast<std::uint64_t>(epoch)), tag);
    r.shuffle(perm_);
    perm_epoch_ = epoch;
  }

  std::vector<std::size_t> perm_;
  std::int64_t perm_epoch_ = -1;
};

// ---------------------------------------------------------------------------

template <class T>
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg_.validate();
    kern::set_threads(cfg_.threads);
    Rng init = Rng::derive(seed, 1);
    g_s_ = std::make_unique<net::Generator<T>>(cfg_.generator_config(), init);
    g_t_ = std::make_unique<net::Generator<T>>(cfg_.generator_config(), init);
    d_s_ = std::make_unique<net::Discriminator<T>>(cfg_.discriminator_config(false), init);
    d_t_ = std::make_unique<net::Discriminator<T>>(cfg_.discriminator_config(false), init);
    d_hat_ = std::make_unique<net::Discriminator<T>>(cfg_.discriminator_config(true), init);
    opt_g_ = Adam<T>(collect({&g_s_->params(), &g_t_->params()}), cfg_.h.betas.first, cfg_.h.betas.second);
    opt_d_ = Adam<T>(collect({&d_s_->params(), &d_t_->params(), &d_hat_->params()}), cfg_.h.betas.first,
                     cfg_.h.betas.second);
    noise_rng_ = Rng::derive(seed, 2);
    data_rng_ = Rng::derive(seed, 3);
  }

  const RunConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t d_step_count() const { return d_steps_; }
  std::int64_t g_step_count() const { return g_steps_; }
  net::Generator<T>& gen_s() { return *g_s_; }
  net::Generator<T>& gen_t() { return *g_t_; }
  net::Discriminator<T>& dis_s() { return *d_s_; }
  net::Discriminator<T>& dis_t() { return *d_t_; }
  net::Discriminator<T>& dis_hat() { return *d_hat_; }

  void set_source(const BatchSource* src) { source_ = src; }

  // Resume may extend the iteration budget and adjust run bookkeeping; the
  // structural configuration (networks, hyperparameters) stays fixed.
  void extend_schedule(const RunConfig& cfg) {
    cfg_.h.total_iters = cfg.h.total_iters;
    cfg_.log_every = cfg.log_every;
    cfg_.ckpt_every = cfg.ckpt_every;
    cfg_.sample_every = cfg.sample_every;
    cfg_.threads = cfg.threads;
    cfg_.validate();
    kern::set_threads(cfg_.threads);
  }
  void set_out_dir(const std::filesystem::path& dir) {
    out_dir_ = dir;
    std::filesystem::create_directories(dir);
    std::ofstream cfg_out(dir / "config_resolved.json");
    cfg_out << run_config_to_json(cfg_) << "\n";
  }
  const std::filesystem::path& out_dir() const { return out_dir_; }

  // One logical iteration: d_updates_per_g discriminator updates on fresh
  // batches, then one generator update.
  LossReport train_one_iteration() {
    if (!source_) throw ArgumentError("trainer: no data source attached");
    double lr = lr_at(iteration_, cfg_.h);
    for (std::int64_t k = 0; k < cfg_.h.d_updates_per_g; ++k) {
      auto [xs, xt] = next_batch();
      TranslationBundle<T> bundle;
      {
        ad::NoGrad detached;  // generator outputs enter the d-step as constants
        bundle = build_translation_graph<T>(*g_s_, *g_t_, xs, xt, noise_rng_, cfg_.h.d_z, cfg_.h.mask_enabled(),
                                            false);
      }
      last_d_report_ = discriminator_step(bundle, *d_s_, *d_t_, *d_hat_, opt_d_, cfg_.h, lr, iteration_);
      ++d_steps_;
    }
    auto [xs, xt] = next_batch();
    auto bundle = build_translation_graph<T>(*g_s_, *g_t_, xs, xt, noise_rng_, cfg_.h.d_z, cfg_.h.mask_enabled(),
                                             !cfg_.h.disable_idt && cfg_.h.eff_lambda_idt() > 0);
    LossReport rep = generator_step(bundle, *g_s_, *g_t_, *d_s_, *d_t_, *d_hat_, opt_g_, cfg_.h, lr, iteration_);
    ++g_steps_;
    ++iteration_;
    return rep;
  }

  // Full loop with periodic logging, checkpoints, and sample grids.
  void run(std::ostream* progress = nullptr) {
    std::ofstream loss_log;
    if (!out_dir_.empty()) loss_log.open(out_dir_ / "loss_log.jsonl", std::ios::app);
    while (iteration_ < cfg_.h.total_iters) {
      LossReport rep = train_one_iteration();
      bool boundary = iteration_ % cfg_.log_every == 0 || iteration_ == cfg_.h.total_iters;
      if (loss_log && boundary) loss_log << rep.to_json_line() << "\n" << std::flush;
      if (progress && boundary)
        *progress << "iter " << iteration_ << "/" << cfg_.h.total_iters << " total " << rep.total << " adv_T "
                  << rep.adv_t << " adv_S " << rep.adv_s << " acl " << rep.acl << " idt " << rep.idt << " mask "
                  << rep.mask << "\n"
                  << std::flush;
      if (!out_dir_.empty()) {
        if (iteration_ % cfg_.ckpt_every == 0 || iteration_ == cfg_.h.total_iters)
          save_checkpoint(out_dir_ / "checkpoint");
        if (iteration_ % cfg_.sample_every == 0 || iteration_ == cfg_.h.total_iters) write_sample_grid();
      }
    }
  }

  // -------------------------------------------------------------------------
  // Checkpointing

  void save_checkpoint(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_store(dir / "g_s.bin", g_s_->params());
    save_store(dir / "g_t.bin", g_t_->params());
    save_store(dir / "d_s.bin", d_s_->params());
    save_store(dir / "d_t.bin", d_t_->params());
    save_store(dir / "d_hat.bin", d_hat_->params());
    opt_g_.save(dir / "adam_g.bin");
    opt_d_.save(dir / "adam_d.bin");

    nlohmann::json j;
    j["format"] = 1;
    j["iteration"] = iteration_;
    j["seed"] = seed_;
    j["d_z"] = cfg_.h.d_z;
    j["hparams_hash"] = hparams_hash(cfg_.h);
    j["dtype"] = sizeof(T) == 4 ? "f32" : "f64";
    j["config"] = nlohmann::json::parse(run_config_to_json(cfg_));
    j["rng"] = {{"noise", noise_rng_.state()}, {"data", data_rng_.state()}};
    j["sampler"] = {{"s_epoch", sampler_s_.epoch},
                    {"s_pos", sampler_s_.pos},
                    {"t_epoch", sampler_t_.epoch},
                    {"t_pos", sampler_t_.pos}};
    j["counters"] = {{"d_steps", d_steps_}, {"g_steps", g_steps_}, {"adam_g_t", opt_g_.t()}, {"adam_d_t", opt_d_.t()}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write checkpoint manifest in " + dir.string());
    out << j.dump(2) << "\n";
  }

  static std::unique_ptr<Trainer> from_checkpoint(const std::filesystem::path& dir, int threads_override = -1) {
    namespace fs = std::filesystem;
    fs::path mf = dir / "manifest.json";
    std::ifstream in(mf);
    if (!in) throw IoError("missing checkpoint manifest: " + mf.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    std::string want_dtype = sizeof(T) == 4 ? "f32" : "f64";
    if (j.at("dtype").get<std::string>() != want_dtype)
      throw IoError("checkpoint dtype is " + j.at("dtype").get<std::string>() + ", expected " + want_dtype);
    RunConfig cfg = run_config_from_json(j.at("config").dump());
    if (threads_override >= 0) cfg.threads = threads_override;
    if (hparams_hash(cfg.h) != j.at("hparams_hash").get<std::uint64_t>())
      throw IoError("checkpoint hyperparameter hash mismatch (corrupt or edited manifest)");

    auto t = std::make_unique<Trainer>(cfg, j.at("seed").get<std::uint64_t>());
    t->load_store(dir / "g_s.bin", t->g_s_->params());
    t->load_store(dir / "g_t.bin", t->g_t_->params());
    t->load_store(dir / "d_s.bin", t->d_s_->params());
    t->load_store(dir / "d_t.bin", t->d_t_->params());
    t->load_store(dir / "d_hat.bin", t->d_hat_->params());
    t->opt_g_.load(dir / "adam_g.bin", j.at("counters").at("adam_g_t").get<std::int64_t>());
    t->opt_d_.load(dir / "adam_d.bin", j.at("counters").at("adam_d_t").get<std::int64_t>());
    t->iteration_ = j.at("iteration").get<std::int64_t>();
    t->d_steps_ = j.at("counters").at("d_steps").get<std::int64_t>();
    t->g_steps_ = j.at("counters").at("g_steps").get<std::int64_t>();
    t->noise_rng_.restore(j.at("rng").at("noise").get<std::string>());
    t->data_rng_.restore(j.at("rng").at("data").get<std::string>());
    t->sampler_s_.epoch = j.at("sampler").at("s_epoch").get<std::int64_t>();
    t->sampler_s_.pos = j.at("sampler").at("s_pos").get<std::int64_t>();
    t->sampler_t_.epoch = j.at("sampler").at("t_epoch").get<std::int64_t>();
    t->sampler_t_.pos = j.at("sampler").at("t_pos").get<std::int64_t>();
    return t;
  }

  // -------------------------------------------------------------------------
  // Inference

  struct Translation {
    data::ImageU8 image;
    data::ImageU8 mask;  // grayscale stored in all three channels
    bool has_mask = false;
  };

  std::vector<Translation> translate(const data::ImageU8& input, int n_styles, std::uint64_t seed) const {
    if (n_styles < 1) throw ArgumentError("translate: n_styles must be >= 1");
    ad::NoGrad inference;
    Rng zrng = Rng::derive(seed, 0x5A17);
    Rng unused(0);
    Tensor<T> x = data::augment<T>(input, unused, cfg_.augment_options(true));
    Var<T> xv = ad::constant(x.reshaped({1, 3, cfg_.image_size, cfg_.image_size}));
    std::vector<Translation> out;
    for (int k = 0; k < n_styles; ++k) {
      Var<T> z = ad::constant(sample_noise<T>(1, cfg_.h.d_z, zrng));
      auto gen = g_t_->forward(xv, z);
      Translation tr;
      Var<T> img = gen.rgb;
      if (cfg_.h.mask_enabled() && gen.mask) {
        img = ad::composite(gen.rgb, gen.mask, xv);
        tr.has_mask = true;
        Tensor<T> m = gen.mask->val.reshaped({1, cfg_.image_size, cfg_.image_size});
        tr.mask.w = static_cast<int>(cfg_.image_size);
        tr.mask.h = static_cast<int>(cfg_.image_size);
        tr.mask.px.resize(static_cast<std::size_t>(cfg_.image_size * cfg_.image_size) * 3);
        for (std::int64_t i = 0; i < cfg_.image_size * cfg_.image_size; ++i) {
          auto v = static_cast<std::uint8_t>(std::clamp(static_cast<double>(m[i]) * 255.0 + 0.5, 0.0, 255.0));
          tr.mask.px[3 * i] = tr.mask.px[3 * i + 1] = tr.mask.px[3 * i + 2] = v;
        }
      }
      tr.image = data::from_tensor(img->val.reshaped({3, cfg_.image_size, cfg_.image_size}));
      out.push_back(std::move(tr));
    }
    return out;
  }

 private:
  static std::vector<Var<T>> collect(std::initializer_list<nn::ParamStore<T>*> stores) {
    std::vector<Var<T>> out;
    for (auto* s : stores)
      for (const auto& [name, p] : s->items()) out.push_back(p);
    return out;
  }

  static void save_store(const std::filesystem::path& path, const nn::ParamStore<T>& ps) {
    std::vector<std::pair<std::string, const Tensor<T>*>> items;
    for (const auto& [name, p] : ps.items()) items.emplace_back(name, &p->val);
    io::write_blob(path, items);
  }

  static void load_store(const std::filesystem::path& path, nn::ParamStore<T>& ps) {
    auto items = io::read_blob<T>(path);
    if (items.size() != ps.items().size()) throw IoError("weight blob entry count mismatch in " + path.string());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& [name, t] = items[i];
      const auto& [want, p] = ps.items()[i];
      if (name != want || !t.same_shape(p->val))
        throw IoError("weight blob entry mismatch: got " + name + ", expected " + want);
      p->val = t;
    }
  }

  std::pair<Tensor<T>, Tensor<T>> next_batch() {
    std::size_t n = static_cast<std::size_t>(cfg_.h.batch_size);
    auto idx_s = sampler_s_.next(n, source_->size(data::Domain::S), seed_, 0x53);
    auto idx_t = sampler_t_.next(n, source_->size(data::Domain::T), seed_, 0x54);
    Tensor<T> xs({cfg_.h.batch_size, 3, cfg_.image_size, cfg_.image_size});
    Tensor<T> xt(xs.shape());
    auto opts = cfg_.augment_options(false);
    std::int64_t plane = 3 * cfg_.image_size * cfg_.image_size;
    for (std::size_t i = 0; i < n; ++i) {
      Tensor<T> a = data::augment<T>(source_->get(data::Domain::S, idx_s[i]), data_rng_, opts);
      std::copy_n(a.data(), plane, xs.data() + static_cast<std::int64_t>(i) * plane);
      Tensor<T> b = data::augment<T>(source_->get(data::Domain::T, idx_t[i]), data_rng_, opts);
      std::copy_n(b.data(), plane, xt.data() + static_cast<std::int64_t>(i) * plane);
    }
    return {std::move(xs), std::move(xt)};
  }

  void write_sample_grid() const {
    if (!source_ || out_dir_.empty()) return;
    ad::NoGrad inference;
    int rows = static_cast<int>(std::min<std::size_t>(3, source_->size(data::Domain::S)));
    std::int64_t sz = cfg_.image_size;
    Rng zrng = Rng::derive(seed_ ^ static_cast<std::uint64_t>(iteration_), 0x9);
    Rng unused(0);
    int cols = cfg_.h.mask_enabled() ? 3 : 2;
    data::ImageU8 grid = data::ImageU8::filled(static_cast<int>(sz) * cols, static_cast<int>(sz) * rows, {0, 0, 0});
    for (int r = 0; r < rows; ++r) {
      data::ImageU8 src = source_->get(data::Domain::S, static_cast<std::size_t>(r));
      Tensor<T> x = data::augment<T>(src, unused, cfg_.augment_options(true));
      Var<T> xv = ad::constant(x.reshaped({1, 3, sz, sz}));
      Var<T> z = ad::constant(sample_noise<T>(1, cfg_.h.d_z, zrng));
      auto gen = g_t_->forward(xv, z);
      Var<T> img = gen.rgb;
      if (cfg_.h.mask_enabled() && gen.mask) img = ad::composite(gen.rgb, gen.mask, xv);
      auto paste = [&](int col, const data::ImageU8& tile) {
        for (int y = 0; y < sz; ++y)
          for (int xpix = 0; xpix < sz; ++xpix)
            for (int c = 0; c < 3; ++c)
              grid.at(r * static_cast<int>(sz) + y, col * static_cast<int>(sz) + xpix, c) = tile.at(y, xpix, c);
      };
      paste(0, data::from_tensor(x));
      paste(1, data::from_tensor(img->val.reshaped({3, sz, sz})));
      if (cfg_.h.mask_enabled() && gen.mask) {
        Tensor<T> m3({3, sz, sz});
        for (std::int64_t i = 0; i < sz * sz; ++i)
          m3[i] = m3[sz * sz + i] = m3[2 * sz * sz + i] = static_cast<T>(gen.mask->val[i] * 2 - 1);
        paste(2, data::from_tensor(m3));
      }
    }
    data::save_png(out_dir_ / ("samples_" + std::to_string(iteration_) + ".png"), grid);
  }

  RunConfig cfg_;
  std::uint64_t seed_ = 0;
  std::unique_ptr<net::Generator<T>> g_s_, g_t_;
  std::unique_ptr<net::Discriminator<T>> d_s_, d_t_, d_hat_;
  Adam<T> opt_g_, opt_d_;
  Rng noise_rng_{0}, data_rng_{0};
  DomainSampler sampler_s_, sampler_t_;
  const BatchSource* source_ = nullptr;
  std::filesystem::path out_dir_;
  std::int64_t iteration_ = 0, d_steps_ = 0, g_steps_ = 0;
  LossReport last_d_report_;
};

}  // namespace acl::gan
