#pragma once

// Flat JSON run configuration: the Hyperparameters fields verbatim plus
// network sizes and run bookkeeping. Unknown keys are hard errors. A
// "preset" key applies a named configuration first, then the remaining
// keys override it.

#include <string>

#include "acl/data.hpp"
#include "acl/hparams.hpp"
#include "acl/networks.hpp"

namespace acl {

struct RunConfig {
  Hyperparameters h;
  std::string preset;

  std::int64_t base_channels = 64;
  std::int64_t n_downsample = 2;
  std::int64_t n_res_blocks = 4;
  std::int64_t n_scales = 3;
  std::int64_t n_layers = 4;
  std::int64_t up_kernel = 5;
  std::int64_t n_style_downsample = 4;
  std::int64_t mlp_dim = 0;

  std::int64_t image_size = 256;
  std::int64_t load_size = 270;
  double flip_prob = 0.5;

  std::int64_t log_every = 100;
  std::int64_t ckpt_every = 5000;
  std::int64_t sample_every = 5000;
  int threads = 0;  // 0 = all available; 1 = deterministic single-threaded

  net::GeneratorConfig generator_config() const {
    net::GeneratorConfig g;
    g.base_channels = base_channels;
    g.n_downsample = n_downsample;
    g.n_res_blocks = n_res_blocks;
    g.d_z = h.d_z;
    g.mask_head = h.mask_enabled();
    g.n_style_downsample = n_style_downsample;
    g.up_kernel = up_kernel;
    g.mlp_dim = mlp_dim;
    return g;
  }

  net::DiscriminatorConfig discriminator_config(bool paired) const {
    net::DiscriminatorConfig d;
    d.n_scales = n_scales;
    d.base_channels = base_channels;
    d.n_layers = n_layers;
    d.paired_input = paired;
    return d;
  }

  data::AugmentOptions augment_options(bool test_mode = false) const {
    data::AugmentOptions a;
    a.load_size = load_size;
    a.crop_size = image_size;
    a.flip_prob = test_mode ? 0.0 : flip_prob;
    a.center_crop = test_mode;
    return a;
  }

  void validate() const;
};

// Named run presets: "toy" (desk scale), "glasses-removal",
// "male-to-female", "selfie-to-anime" (paper scale, 256x256).
RunConfig run_config_preset(const std::string& name);

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

}  // namespace acl
