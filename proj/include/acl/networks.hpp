#pragma once

// The three network families: generators (content encoder + noise encoder +
// AdaIN decoder with optional mask head), multi-scale patch discriminators,
// and the paired-input consistency discriminator.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acl/nn.hpp"

namespace acl::net {

using ad::Var;
using nn::ParamStore;

struct GeneratorConfig {
  std::int64_t base_channels = 64;
  std::int64_t n_downsample = 2;
  std::int64_t n_res_blocks = 4;
  std::int64_t d_z = 8;
  bool mask_head = true;
  // Architecture knobs with fixed conventional defaults.
  std::int64_t n_style_downsample = 4;  // total stride-2 convs in the noise encoder
  std::int64_t up_kernel = 5;           // kernel of the upsampling convs
  std::int64_t mlp_dim = 0;             // 0 = 4 * base_channels
  std::int64_t in_channels = 3;
  nn::Act activation = nn::Act::ReLU;

  std::int64_t bottleneck() const { return base_channels << n_downsample; }
  std::int64_t mlp_width() const { return mlp_dim > 0 ? mlp_dim : 4 * base_channels; }
  std::int64_t downsample_factor() const { return std::int64_t(1) << n_downsample; }

  void validate() const {
    if (base_channels < 1) throw ConfigError("base_channels", "must be positive");
    if (n_downsample < 1) throw ConfigError("n_downsample", "must be positive");
    if (n_res_blocks < 1) throw ConfigError("n_res_blocks", "must be positive");
    if (d_z < 1) throw ConfigError("d_z", "must be positive");
    if (n_style_downsample < 1) throw ConfigError("n_style_downsample", "must be positive");
    if (up_kernel < 1 || up_kernel % 2 == 0) throw ConfigError("up_kernel", "must be odd and positive");
  }
};

struct DiscriminatorConfig {
  std::int64_t n_scales = 3;
  std::int64_t base_channels = 64;
  std::int64_t n_layers = 4;
  bool paired_input = false;  // true only for the consistency discriminator
  std::int64_t in_channels = 3;
  nn::Act activation = nn::Act::LeakyReLU;

  void validate() const {
    if (n_scales < 1) throw ConfigError("n_scales", "must be >= 1");
    if (base_channels < 1) throw ConfigError("base_channels", "must be positive");
    if (n_layers < 1) throw ConfigError("n_layers", "must be positive");
  }
};

template <class T>
struct GeneratorOut {
  Var<T> rgb;   // tanh output, same spatial dims as the input
  Var<T> mask;  // sigmoid output (N,1,H,W); empty Var when mask head is off
};

template <class T>
class Generator {
 public:
  Generator(GeneratorConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::int64_t ch = cfg_.base_channels;
    enc_in_ = nn::Conv2d<T>::make(ps_, "enc.in", cfg_.in_channels, ch, 7, 1, 3, nn::Pad::Reflect, rng);
    enc_in_norm_ = nn::InstanceNorm<T>::make(ps_, "enc.in.norm", ch);
    for (std::int64_t i = 0; i < cfg_.n_downsample; ++i) {
      enc_down_.push_back(
          nn::Conv2d<T>::make(ps_, "enc.down" + std::to_string(i), ch, ch * 2, 4, 2, 1, nn::Pad::Reflect, rng));
      enc_down_norm_.push_back(nn::InstanceNorm<T>::make(ps_, "enc.down" + std::to_string(i) + ".norm", ch * 2));
      ch *= 2;
    }
    for (std::int64_t i = 0; i < cfg_.n_res_blocks; ++i) {
      std::string p = "enc.res" + std::to_string(i);
      enc_res_.push_back({nn::Conv2d<T>::make(ps_, p + ".c1", ch, ch, 3, 1, 1, nn::Pad::Reflect, rng),
                          nn::InstanceNorm<T>::make(ps_, p + ".n1", ch),
                          nn::Conv2d<T>::make(ps_, p + ".c2", ch, ch, 3, 1, 1, nn::Pad::Reflect, rng),
                          nn::InstanceNorm<T>::make(ps_, p + ".n2", ch)});
    }

    // Noise encoder: no normalization, global pooling, 1x1 projection.
    std::int64_t sch = cfg_.base_channels;
    style_in_ = nn::Conv2d<T>::make(ps_, "style.in", cfg_.in_channels, sch, 7, 1, 3, nn::Pad::Reflect, rng);
    for (std::int64_t i = 0; i < cfg_.n_style_downsample; ++i) {
      std::int64_t out = i < 2 ? sch * 2 : sch;
      style_down_.push_back(
          nn::Conv2d<T>::make(ps_, "style.down" + std::to_string(i), sch, out, 4, 2, 1, nn::Pad::Reflect, rng));
      sch = out;
    }
    style_out_ = nn::Conv2d<T>::make(ps_, "style.out", sch, cfg_.d_z, 1, 1, 0, nn::Pad::Zero, rng);

    // MLP mapping z to the AdaIN scales/biases of the decoder res blocks.
    std::int64_t w = cfg_.mlp_width();
    std::int64_t n_adain = cfg_.n_res_blocks * 2 * cfg_.bottleneck() * 2;
    mlp_ = {nn::Linear<T>::make(ps_, "mlp.0", cfg_.d_z, w, rng), nn::Linear<T>::make(ps_, "mlp.1", w, w, rng),
            nn::Linear<T>::make(ps_, "mlp.2", w, n_adain, rng)};

    for (std::int64_t i = 0; i < cfg_.n_res_blocks; ++i) {
      std::string p = "dec.res" + std::to_string(i);
      dec_res_.push_back({nn::Conv2d<T>::make(ps_, p + ".c1", ch, ch, 3, 1, 1, nn::Pad::Reflect, rng),
                          nn::Conv2d<T>::make(ps_, p + ".c2", ch, ch, 3, 1, 1, nn::Pad::Reflect, rng)});
    }
    for (std::int64_t i = 0; i < cfg_.n_downsample; ++i) {
      std::string p = "dec.up" + std::to_string(i);
      dec_up_.push_back(nn::Conv2d<T>::make(ps_, p + ".c", ch, ch / 2, cfg_.up_kernel, 1, cfg_.up_kernel / 2,
                                            nn::Pad::Reflect, rng));
      dec_up_norm_.push_back(nn::LayerNorm<T>::make(ps_, p + ".norm", ch / 2));
      ch /= 2;
    }
    std::int64_t out_ch = cfg_.in_channels + (cfg_.mask_head ? 1 : 0);
    dec_out_ = nn::Conv2d<T>::make(ps_, "dec.out", ch, out_ch, 7, 1, 3, nn::Pad::Reflect, rng);
  }

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }
  std::int64_t parameter_count() const { return ps_.parameter_count(); }

  GeneratorOut<T> forward(const Var<T>& image, const Var<T>& z) const {
    check_image(image);
    if (z->val.ndim() != 2 || z->val.dim(0) != image->val.dim(0) || z->val.dim(1) != cfg_.d_z)
      throw ArgumentError("generator: noise must be (batch, d_z), got " + shape_str(z->val.shape()));

    Var<T> h = nn::activate(enc_in_norm_(enc_in_(image)), cfg_.activation);
    for (std::size_t i = 0; i < enc_down_.size(); ++i)
      h = nn::activate(enc_down_norm_[i](enc_down_[i](h)), cfg_.activation);
    for (const auto& rb : enc_res_) {
      Var<T> r = nn::activate(rb.n1(rb.c1(h)), cfg_.activation);
      h = ad::add(h, rb.n2(rb.c2(r)));
    }

    Var<T> style = mlp_[2](nn::activate(mlp_[1](nn::activate(mlp_[0](z), cfg_.activation)), cfg_.activation));
    std::int64_t n = image->val.dim(0), c = cfg_.bottleneck();
    Var<T> style4 = ad::reshape(style, {n, style->val.dim(1), 1, 1});
    std::int64_t off = 0;
    for (const auto& rb : dec_res_) {
      Var<T> r = rb.c1(h);
      r = nn::activate(adain_slice(r, style4, off, n, c), cfg_.activation);
      r = rb.c2(r);
      r = adain_slice(r, style4, off, n, c);
      h = ad::add(h, r);
    }
    for (std::size_t i = 0; i < dec_up_.size(); ++i)
      h = nn::activate(dec_up_norm_[i](dec_up_[i](ad::upsample_nearest2(h))), cfg_.activation);
    Var<T> out = dec_out_(h);

    GeneratorOut<T> res;
    res.rgb = ad::tanh(ad::narrow_ch(out, 0, cfg_.in_channels));
    if (cfg_.mask_head) res.mask = ad::sigmoid(ad::narrow_ch(out, cfg_.in_channels, 1));
    return res;
  }

  // Noise encoder; used only to build the identity-loss path.
  Var<T> encode_noise(const Var<T>& image) const {
    check_image(image);
    Var<T> h = nn::activate(style_in_(image), cfg_.activation);
    for (const auto& cv : style_down_) h = nn::activate(cv(h), cfg_.activation);
    h = ad::mean_dims(h, {2, 3});
    h = style_out_(h);
    return ad::reshape(h, {image->val.dim(0), cfg_.d_z});
  }

 private:
  struct ResBlock {
    nn::Conv2d<T> c1;
    nn::InstanceNorm<T> n1;
    nn::Conv2d<T> c2;
    nn::InstanceNorm<T> n2;
  };
  struct AdainResBlock {
    nn::Conv2d<T> c1, c2;
  };

  void check_image(const Var<T>& image) const {
    const auto& s = image->val.shape();
    if (s.size() != 4 || s[1] != cfg_.in_channels)
      throw ArgumentError("generator: expected (N," + std::to_string(cfg_.in_channels) + ",H,W), got " +
                          shape_str(s));
    std::int64_t f = cfg_.downsample_factor();
    if (s[2] % f || s[3] % f || s[2] == 0 || s[3] == 0)
      throw ArgumentError("generator: spatial dims " + shape_str(s) + " must be positive multiples of " +
                          std::to_string(f));
  }

  // AdaIN parameter layout per conv: biases first, then scales.
  Var<T> adain_slice(const Var<T>& x, const Var<T>& style4, std::int64_t& off, std::int64_t n, std::int64_t c) const {
    Var<T> bias = ad::reshape(ad::narrow_ch(style4, off, c), {n, c});
    Var<T> scl = ad::reshape(ad::narrow_ch(style4, off + c, c), {n, c});
    off += 2 * c;
    return nn::adain(x, scl, bias);
  }

  GeneratorConfig cfg_;
  ParamStore<T> ps_;
  nn::Conv2d<T> enc_in_;
  nn::InstanceNorm<T> enc_in_norm_;
  std::vector<nn::Conv2d<T>> enc_down_;
  std::vector<nn::InstanceNorm<T>> enc_down_norm_;
  std::vector<ResBlock> enc_res_;
  nn::Conv2d<T> style_in_, style_out_;
  std::vector<nn::Conv2d<T>> style_down_;
  std::vector<nn::Linear<T>> mlp_;
  std::vector<AdainResBlock> dec_res_;
  std::vector<nn::Conv2d<T>> dec_up_;
  std::vector<nn::LayerNorm<T>> dec_up_norm_;
  nn::Conv2d<T> dec_out_;
};

// Multi-scale patch discriminator. Scale s sees the input downsampled s
// times by 3x3/stride-2 average pooling; each scale owns its stack and
// emits one raw score map.
template <class T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    std::int64_t in_ch = cfg_.in_channels * (cfg_.paired_input ? 2 : 1);
    for (std::int64_t s = 0; s < cfg_.n_scales; ++s) {
      Scale sc;
      std::string p = "s" + std::to_string(s);
      std::int64_t ch = cfg_.base_channels;
      sc.convs.push_back(nn::Conv2d<T>::make(ps_, p + ".c0", in_ch, ch, 4, 2, 1, nn::Pad::Zero, rng));
      for (std::int64_t l = 1; l < cfg_.n_layers; ++l) {
        sc.convs.push_back(nn::Conv2d<T>::make(ps_, p + ".c" + std::to_string(l), ch, ch * 2, 4, 2, 1,
                                               nn::Pad::Zero, rng));
        ch *= 2;
      }
      sc.out = nn::Conv2d<T>::make(ps_, p + ".out", ch, 1, 1, 1, 0, nn::Pad::Zero, rng);
      scales_.push_back(std::move(sc));
    }
  }

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return ps_; }
  const ParamStore<T>& params() const { return ps_; }
  std::int64_t parameter_count() const { return ps_.parameter_count(); }

  std::vector<Var<T>> forward(const Var<T>& image) const {
    if (cfg_.paired_input)
      throw ArgumentError("discriminator: paired-input model requires forward_pair(reference, candidate)");
    return run(image);
  }

  // Consistency scoring: the pair is channel-concatenated.
  std::vector<Var<T>> forward_pair(const Var<T>& reference, const Var<T>& candidate) const {
    if (!cfg_.paired_input) throw ArgumentError("discriminator: not configured for paired input");
    if (!reference->val.same_shape(candidate->val))
      throw ArgumentError("discriminator: pair shapes differ, " + shape_str(reference->val.shape()) + " vs " +
                          shape_str(candidate->val.shape()));
    return run(ad::concat_ch(reference, candidate));
  }

 private:
  struct Scale {
    std::vector<nn::Conv2d<T>> convs;
    nn::Conv2d<T> out;
  };

  std::vector<Var<T>> run(Var<T> x) const {
    const auto& s = x->val.shape();
    std::int64_t in_ch = cfg_.in_channels * (cfg_.paired_input ? 2 : 1);
    if (s.size() != 4 || s[1] != in_ch)
      throw ArgumentError("discriminator: expected (N," + std::to_string(in_ch) + ",H,W), got " + shape_str(s));
    // Every scale halves n_layers times; the deepest scale additionally
    // sees the input pooled (n_scales-1) times.
    std::int64_t need = std::int64_t(1) << (cfg_.n_layers + cfg_.n_scales - 1);
    if (s[2] < need || s[3] < need)
      throw ArgumentError("discriminator: input " + shape_str(s) + " too small for " +
                          std::to_string(cfg_.n_scales) + " scales of " + std::to_string(cfg_.n_layers) + " layers");
    std::vector<Var<T>> maps;
    for (std::size_t sc = 0; sc < scales_.size(); ++sc) {
      if (sc > 0) x = ad::avg_pool3s2(x);
      Var<T> h = x;
      for (const auto& cv : scales_[sc].convs) h = nn::activate(cv(h), cfg_.activation);
      maps.push_back(scales_[sc].out(h));
    }
    return maps;
  }

  DiscriminatorConfig cfg_;
  ParamStore<T> ps_;
  std::vector<Scale> scales_;
};

template <class T>
std::int64_t count_parameters(std::initializer_list<const ParamStore<T>*> stores) {
  std::int64_t n = 0;
  for (const auto* s : stores) n += s->parameter_count();
  return n;
}

}  // namespace acl::net
