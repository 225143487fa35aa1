#include "acl/hparams.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

namespace acl {

using nlohmann::json;

Hyperparameters validate_hparams(const Hyperparameters& h) {
  auto nonneg = [](const char* f, double v) {
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError(f, "must be a finite nonnegative real");
  };
  auto positive = [](const char* f, double v) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError(f, "must be a finite positive real");
  };
  auto positive_int = [](const char* f, std::int64_t v) {
    if (v < 1) throw ConfigError(f, "must be a positive integer");
  };
  nonneg("lambda_acl", h.lambda_acl);
  nonneg("lambda_idt", h.lambda_idt);
  nonneg("lambda_mask", h.lambda_mask);
  positive("delta", h.delta);
  positive("epsilon", h.epsilon);
  if (!(h.delta_min >= 0 && h.delta_min <= 1)) throw ConfigError("delta_min", "must lie in [0,1]");
  if (!(h.delta_max >= 0 && h.delta_max <= 1)) throw ConfigError("delta_max", "must lie in [0,1]");
  if (h.delta_min > h.delta_max) throw ConfigError("delta_min", "must be <= delta_max");
  positive_int("d_z", h.d_z);
  positive("lr0", h.lr0);
  if (!(h.betas.first >= 0 && h.betas.first < 1)) throw ConfigError("betas", "beta1 must lie in [0,1)");
  if (!(h.betas.second >= 0 && h.betas.second < 1)) throw ConfigError("betas", "beta2 must lie in [0,1)");
  positive_int("batch_size", h.batch_size);
  positive_int("total_iters", h.total_iters);
  positive_int("lr_halve_every", h.lr_halve_every);
  positive_int("d_updates_per_g", h.d_updates_per_g);
  if (!h.use_mask && h.lambda_mask != 0.0)
    throw ConfigError("lambda_mask", "must be 0 when use_mask is false");
  return h;
}

Hyperparameters hparams_preset(const std::string& name) {
  Hyperparameters h;  // defaults carry the shared training settings
  if (name == "glasses-removal") {
    h.lambda_acl = 0.2;
    h.lambda_mask = 0.025;
    h.delta_min = 0.05;
    h.delta_max = 0.1;
  } else if (name == "male-to-female") {
    h.lambda_acl = 0.2;
    h.lambda_mask = 0.025;
    h.delta_min = 0.3;
    h.delta_max = 0.5;
  } else if (name == "selfie-to-anime") {
    h.lambda_acl = 0.5;
    h.lambda_mask = 0.0;
    h.delta_min = 0.0;
    h.delta_max = 0.0;
    h.use_mask = false;
  } else if (name == "toy") {
    // Desk-scale bar removal: the bar covers 12.5% of the pixels.
    h.lambda_acl = 0.2;
    h.lambda_mask = 0.025;
    h.delta_min = 0.05;
    h.delta_max = 0.25;
    h.total_iters = 20000;
  } else {
    throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  return validate_hparams(h);
}

std::vector<std::string> hparams_preset_names() {
  return {"glasses-removal", "male-to-female", "selfie-to-anime", "toy"};
}

std::string hparams_to_json(const Hyperparameters& h) {
  json j;
  j["lambda_acl"] = h.lambda_acl;
  j["lambda_idt"] = h.lambda_idt;
  j["lambda_mask"] = h.lambda_mask;
  j["delta"] = h.delta;
  j["epsilon"] = h.epsilon;
  j["delta_min"] = h.delta_min;
  j["delta_max"] = h.delta_max;
  j["d_z"] = h.d_z;
  j["lr0"] = h.lr0;
  j["betas"] = {h.betas.first, h.betas.second};
  j["batch_size"] = h.batch_size;
  j["total_iters"] = h.total_iters;
  j["lr_halve_every"] = h.lr_halve_every;
  j["d_updates_per_g"] = h.d_updates_per_g;
  j["use_mask"] = h.use_mask;
  j["disable_acl"] = h.disable_acl;
  j["disable_idt"] = h.disable_idt;
  j["disable_mask"] = h.disable_mask;
  j["swap_acl_labels"] = h.swap_acl_labels;
  return j.dump(2);
}

namespace {

void apply_hparam_key(Hyperparameters& h, const std::string& key, const json& v) {
  try {
    if (key == "lambda_acl")
      h.lambda_acl = v.get<double>();
    else if (key == "lambda_idt")
      h.lambda_idt = v.get<double>();
    else if (key == "lambda_mask")
      h.lambda_mask = v.get<double>();
    else if (key == "delta")
      h.delta = v.get<double>();
    else if (key == "epsilon")
      h.epsilon = v.get<double>();
    else if (key == "delta_min")
      h.delta_min = v.get<double>();
    else if (key == "delta_max")
      h.delta_max = v.get<double>();
    else if (key == "d_z")
      h.d_z = v.get<std::int64_t>();
    else if (key == "lr0")
      h.lr0 = v.get<double>();
    else if (key == "betas") {
      if (!v.is_array() || v.size() != 2) throw ConfigError("betas", "expected a 2-element array");
      h.betas = {v[0].get<double>(), v[1].get<double>()};
    } else if (key == "batch_size")
      h.batch_size = v.get<std::int64_t>();
    else if (key == "total_iters")
      h.total_iters = v.get<std::int64_t>();
    else if (key == "lr_halve_every")
      h.lr_halve_every = v.get<std::int64_t>();
    else if (key == "d_updates_per_g")
      h.d_updates_per_g = v.get<std::int64_t>();
    else if (key == "use_mask")
      h.use_mask = v.get<bool>();
    else if (key == "disable_acl")
      h.disable_acl = v.get<bool>();
    else if (key == "disable_idt")
      h.disable_idt = v.get<bool>();
    else if (key == "disable_mask")
      h.disable_mask = v.get<bool>();
    else if (key == "swap_acl_labels")
      h.swap_acl_labels = v.get<bool>();
    else
      throw ConfigError(key, "unknown hyperparameter key");
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("bad value: ") + e.what());
  }
}

}  // namespace

Hyperparameters hparams_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<json>", std::string("parse failure: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<json>", "expected a JSON object");
  Hyperparameters h;
  for (const auto& [key, v] : j.items()) apply_hparam_key(h, key, v);
  return validate_hparams(h);
}

std::uint64_t hparams_hash(const Hyperparameters& h) {
  std::string s = hparams_to_json(h);
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : s) hash = (hash ^ c) * 1099511628211ull;
  return hash;
}

}  // namespace acl
