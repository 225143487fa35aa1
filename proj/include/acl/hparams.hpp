#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "acl/errors.hpp"

namespace acl {

// Loss weights, mask bounds, and optimizer/schedule settings. The JSON form
// mirrors these field names exactly; unknown keys are a hard error.
struct Hyperparameters {
  double lambda_acl = 0.2;
  double lambda_idt = 1.0;
  double lambda_mask = 0.025;
  double delta = 0.001;
  double epsilon = 0.01;
  double delta_min = 0.05;
  double delta_max = 0.1;
  std::int64_t d_z = 8;
  double lr0 = 1e-4;
  std::pair<double, double> betas{0.5, 0.999};
  std::int64_t batch_size = 3;
  std::int64_t total_iters = 350000;
  std::int64_t lr_halve_every = 100000;
  std::int64_t d_updates_per_g = 2;
  bool use_mask = true;
  bool disable_acl = false;
  bool disable_idt = false;
  bool disable_mask = false;
  // The paper notes the consistency discriminator's real/fake labels can be
  // swapped; exposed as a switch, default off.
  bool swap_acl_labels = false;

  bool mask_enabled() const { return use_mask && !disable_mask; }
  double eff_lambda_acl() const { return disable_acl ? 0.0 : lambda_acl; }
  double eff_lambda_idt() const { return disable_idt ? 0.0 : lambda_idt; }
  double eff_lambda_mask() const { return (disable_mask || !use_mask) ? 0.0 : lambda_mask; }
};

// Returns h unchanged when all invariants hold, otherwise throws a
// ConfigError naming the violated field.
Hyperparameters validate_hparams(const Hyperparameters& h);

// Named per-application presets: "glasses-removal", "male-to-female",
// "selfie-to-anime" (paper settings) and "toy" (desk scale).
Hyperparameters hparams_preset(const std::string& name);
std::vector<std::string> hparams_preset_names();

// Strict JSON round trip (field names as above, betas as a 2-array).
std::string hparams_to_json(const Hyperparameters& h);
Hyperparameters hparams_from_json(const std::string& text);

// Stable content hash used by checkpoints.
std::uint64_t hparams_hash(const Hyperparameters& h);

}  // namespace acl
