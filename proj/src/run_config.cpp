#include "acl/run_config.hpp"

#include <fstream>
#include <sstream>
#include <set>

#include <json.hpp>

namespace acl {

using nlohmann::json;

void RunConfig::validate() const {
  validate_hparams(h);
  auto positive = [](const char* f, std::int64_t v) {
    if (v < 1) throw ConfigError(f, "must be a positive integer");
  };
  positive("base_channels", base_channels);
  positive("n_downsample", n_downsample);
  positive("n_res_blocks", n_res_blocks);
  positive("n_scales", n_scales);
  positive("n_layers", n_layers);
  positive("image_size", image_size);
  positive("load_size", load_size);
  positive("log_every", log_every);
  positive("ckpt_every", ckpt_every);
  positive("sample_every", sample_every);
  if (up_kernel < 1 || up_kernel % 2 == 0) throw ConfigError("up_kernel", "must be odd and positive");
  if (n_style_downsample < 1) throw ConfigError("n_style_downsample", "must be positive");
  if (mlp_dim < 0) throw ConfigError("mlp_dim", "must be nonnegative (0 = auto)");
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw ConfigError("flip_prob", "must lie in [0,1]");
  if (threads < 0) throw ConfigError("threads", "must be nonnegative");
  if (image_size > load_size) throw ConfigError("image_size", "must not exceed load_size");
  if (image_size % (std::int64_t(1) << n_downsample))
    throw ConfigError("image_size", "must be divisible by 2^n_downsample");
  generator_config().validate();
  discriminator_config(false).validate();
}

RunConfig run_config_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "toy") {
    c.h = hparams_preset("toy");
    c.base_channels = 16;
    c.n_res_blocks = 2;
    c.n_scales = 2;
    c.n_layers = 3;
    c.up_kernel = 3;
    c.n_style_downsample = 3;
    c.image_size = 64;
    c.load_size = 64;
    c.log_every = 50;
    c.ckpt_every = 1000;
    c.sample_every = 1000;
  } else {
    c.h = hparams_preset(name);  // throws on unknown names
  }
  c.validate();
  return c;
}

namespace {

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys = {
      "preset",        "base_channels", "n_downsample", "n_res_blocks",       "n_scales",
      "n_layers",      "up_kernel",     "mlp_dim",      "n_style_downsample", "image_size",
      "load_size",     "flip_prob",     "log_every",    "ckpt_every",         "sample_every",
      "threads"};
  return keys;
}

void apply_run_key(RunConfig& c, const std::string& key, const json& v) {
  try {
    if (key == "base_channels")
      c.base_channels = v.get<std::int64_t>();
    else if (key == "n_downsample")
      c.n_downsample = v.get<std::int64_t>();
    else if (key == "n_res_blocks")
      c.n_res_blocks = v.get<std::int64_t>();
    else if (key == "n_scales")
      c.n_scales = v.get<std::int64_t>();
    else if (key == "n_layers")
      c.n_layers = v.get<std::int64_t>();
    else if (key == "up_kernel")
      c.up_kernel = v.get<std::int64_t>();
    else if (key == "n_style_downsample")
      c.n_style_downsample = v.get<std::int64_t>();
    else if (key == "mlp_dim")
      c.mlp_dim = v.get<std::int64_t>();
    else if (key == "image_size")
      c.image_size = v.get<std::int64_t>();
    else if (key == "load_size")
      c.load_size = v.get<std::int64_t>();
    else if (key == "flip_prob")
      c.flip_prob = v.get<double>();
    else if (key == "log_every")
      c.log_every = v.get<std::int64_t>();
    else if (key == "ckpt_every")
      c.ckpt_every = v.get<std::int64_t>();
    else if (key == "sample_every")
      c.sample_every = v.get<std::int64_t>();
    else if (key == "threads")
      c.threads = v.get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("bad value: ") + e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("<json>", std::string("parse failure: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("<json>", "expected a JSON object");

  RunConfig c;
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError("preset", "must be a string");
    c = run_config_preset(j["preset"].get<std::string>());
  }
  // Hyperparameter keys and run keys share one flat namespace.
  json hj = json::parse(hparams_to_json(c.h));
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") continue;
    if (run_keys().count(key)) {
      apply_run_key(c, key, v);
    } else {
      hj[key] = v;  // validated (incl. unknown-key rejection) below
    }
  }
  c.h = hparams_from_json(hj.dump());
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j = json::parse(hparams_to_json(c.h));
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["base_channels"] = c.base_channels;
  j["n_downsample"] = c.n_downsample;
  j["n_res_blocks"] = c.n_res_blocks;
  j["n_scales"] = c.n_scales;
  j["n_layers"] = c.n_layers;
  j["up_kernel"] = c.up_kernel;
  j["n_style_downsample"] = c.n_style_downsample;
  j["mlp_dim"] = c.mlp_dim;
  j["image_size"] = c.image_size;
  j["load_size"] = c.load_size;
  j["flip_prob"] = c.flip_prob;
  j["log_every"] = c.log_every;
  j["ckpt_every"] = c.ckpt_every;
  j["sample_every"] = c.sample_every;
  j["threads"] = c.threads;
  return j.dump(2);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

}  // namespace acl
