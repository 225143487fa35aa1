// Command-line entry points: train, translate, evaluate, make-toy,
// report-params. Exit codes: 0 success, 2 usage/configuration, 3 numerical
// abort during training.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "acl/metrics.hpp"
#include "acl/train.hpp"

namespace fs = std::filesystem;
using namespace acl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// The training dtype. Gradient-sensitive verification uses the double
// instantiation from the test suites; the shipped trainer runs in float.
using TrainerF = gan::Trainer<float>;

struct TrainArgs {
  std::string config, data_root, out, resume;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

struct TranslateArgs {
  std::string checkpoint, input, out;
  int n_styles = 1;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

struct EvaluateArgs {
  std::string real_dir, fake_dir, extractor = "desk", out;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

struct MakeToyArgs {
  std::string out;
  std::int64_t n = 200, size = 64;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

struct ReportParamsArgs {
  std::string config;
  bool dry_run = false;
};

// Zeroes the fields a resume is allowed to change, then hashes the rest.
std::uint64_t structural_fingerprint(RunConfig cfg) {
  cfg.h.total_iters = 1;
  cfg.log_every = 1;
  cfg.ckpt_every = 1;
  cfg.sample_every = 1;
  cfg.threads = 0;
  cfg.preset.clear();
  std::string s = run_config_to_json(cfg);
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : s) hash = (hash ^ c) * 1099511628211ull;
  return hash;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  fs::path root(a.data_root);
  if (a.dry_run) {
    std::cout << "train plan:\n  data: " << root / "domain_S" << " + " << root / "domain_T" << "\n  out: " << a.out
              << "\n  seed: " << a.seed << "\n  resume: " << (a.resume.empty() ? "(fresh)" : a.resume)
              << "\nresolved config:\n"
              << run_config_to_json(cfg) << "\n";
    return kExitOk;
  }
  data::UnpairedDataset ds(root / "domain_S", root / "domain_T");
  gan::DatasetSource source(&ds);

  std::unique_ptr<TrainerF> trainer;
  if (!a.resume.empty()) {
    trainer = TrainerF::from_checkpoint(a.resume, cfg.threads);
    if (structural_fingerprint(trainer->config()) != structural_fingerprint(cfg))
      throw ConfigError("resume", "config differs structurally from the checkpoint's configuration");
    trainer->extend_schedule(cfg);
  } else {
    trainer = std::make_unique<TrainerF>(cfg, a.seed);
  }
  trainer->set_source(&source);
  trainer->set_out_dir(a.out);
  try {
    trainer->run(&std::cout);
  } catch (const NumericalError& e) {
    fs::path last = fs::path(a.out) / "checkpoint";
    std::cerr << "error: " << e.what() << "\n";
    std::cerr << "last checkpoint: " << (fs::exists(last / "manifest.json") ? last.string() : "(none written)")
              << "\n";
    return kExitNumerical;
  }
  std::cout << "done: " << trainer->iteration() << " iterations, checkpoint at "
            << (fs::path(a.out) / "checkpoint").string() << "\n";
  return kExitOk;
}

int cmd_translate(const TranslateArgs& a) {
  if (!fs::exists(fs::path(a.checkpoint) / "manifest.json"))
    throw IoError("checkpoint not found: " + a.checkpoint);
  std::vector<fs::path> inputs;
  fs::path in(a.input);
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_regular_file()) inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
  } else if (fs::is_regular_file(in)) {
    inputs.push_back(in);
  } else {
    throw IoError("input not found: " + a.input);
  }
  if (inputs.empty()) throw DatasetError("no input images in " + a.input);

  if (a.dry_run) {
    std::cout << "translate plan:\n  checkpoint: " << a.checkpoint << "\n  inputs: " << inputs.size()
              << " file(s)\n  styles per input: " << a.n_styles << "\n  out: " << a.out << "\n  seed: " << a.seed
              << "\n";
    return kExitOk;
  }

  auto trainer = TrainerF::from_checkpoint(a.checkpoint);
  fs::create_directories(a.out);
  {
    nlohmann::json j;
    j["command"] = "translate";
    j["checkpoint"] = a.checkpoint;
    j["n_styles"] = a.n_styles;
    j["seed"] = a.seed;
    j["config"] = nlohmann::json::parse(run_config_to_json(trainer->config()));
    std::ofstream(fs::path(a.out) / "resolved_config.json") << j.dump(2) << "\n";
  }
  std::size_t written = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    data::ImageU8 img = data::load_image(inputs[i]);
    auto outs = trainer->translate(img, a.n_styles, Rng::derive(a.seed, i).next_u64());
    for (int k = 0; k < a.n_styles; ++k) {
      std::string stem = inputs[i].stem().string() + "_s" + std::to_string(k);
      data::save_png(fs::path(a.out) / (stem + ".png"), outs[static_cast<std::size_t>(k)].image);
      ++written;
      if (outs[static_cast<std::size_t>(k)].has_mask) {
        const auto& m = outs[static_cast<std::size_t>(k)].mask;
        std::vector<std::uint8_t> gray(static_cast<std::size_t>(m.w) * m.h);
        for (std::size_t p = 0; p < gray.size(); ++p) gray[p] = m.px[3 * p];
        data::save_png_gray(fs::path(a.out) / (stem + "_mask.png"), m.w, m.h, gray);
      }
    }
  }
  std::cout << "wrote " << written << " translation(s) to " << a.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const EvaluateArgs& a) {
  if (a.dry_run) {
    metrics::make_extractor(a.extractor);  // validates the id
    std::cout << "evaluate plan:\n  real: " << a.real_dir << "\n  fake: " << a.fake_dir
              << "\n  extractor: " << a.extractor << "\n  out: " << a.out << "\n";
    return kExitOk;
  }
  auto r = metrics::evaluate_dirs(a.real_dir, a.fake_dir, a.extractor, a.seed);
  nlohmann::json j = nlohmann::json::parse(metrics::eval_result_to_json(r));
  j["config"] = {{"real_dir", a.real_dir}, {"fake_dir", a.fake_dir}, {"extractor", a.extractor}, {"seed", a.seed}};
  fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream of(out);
  if (!of) throw IoError("cannot write " + a.out);
  of << j.dump(2) << "\n";
  std::cout << "fid " << r.fid << "\nkid_mean " << r.kid_mean << "\n";
  return kExitOk;
}

int cmd_make_toy(const MakeToyArgs& a) {
  data::ToySpec spec;
  spec.n_per_domain = a.n;
  spec.image_size = a.size;
  spec.validate();
  if (a.dry_run) {
    std::cout << "make-toy plan:\n  out: " << a.out << "\n  images: " << a.n << " per domain, " << a.size << "x"
              << a.size << "\n  seed: " << a.seed << "\n";
    return kExitOk;
  }
  fs::path manifest = data::generate_toy(spec, a.out, a.seed);
  std::cout << manifest.string() << "\n";
  return kExitOk;
}

int cmd_report_params(const ReportParamsArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.dry_run) {
    std::cout << "report-params plan: image " << cfg.image_size << ", base channels " << cfg.base_channels << "\n";
    return kExitOk;
  }
  Rng rng(0);
  net::Generator<float> g_s(cfg.generator_config(), rng), g_t(cfg.generator_config(), rng);
  net::Discriminator<float> d_s(cfg.discriminator_config(false), rng), d_t(cfg.discriminator_config(false), rng),
      d_hat(cfg.discriminator_config(true), rng);
  auto line = [](const char* name, std::int64_t n) { std::cout << name << " " << n << "\n"; };
  line("G_S", g_s.parameter_count());
  line("G_T", g_t.parameter_count());
  line("D_S", d_s.parameter_count());
  line("D_T", d_t.parameter_count());
  line("D_hat", d_hat.parameter_count());
  line("total", net::count_parameters<float>(
                    {&g_s.params(), &g_t.params(), &d_s.params(), &d_t.params(), &d_hat.params()}));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACL-GAN: unpaired image-to-image translation without cycle consistency"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model on a two-domain dataset");
  train->add_option("--config", train_args.config, "Run configuration (JSON)")->required();
  train->add_option("--data-root", train_args.data_root, "Directory containing domain_S/ and domain_T/")->required();
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--seed", train_args.seed, "Training seed")->default_val(0);
  train->add_option("--resume", train_args.resume, "Checkpoint directory to resume from");
  train->add_flag("--dry-run", train_args.dry_run, "Validate and print the plan without running");

  TranslateArgs tr_args;
  auto* translate = app.add_subcommand("translate", "Translate image(s) with a trained model");
  translate->add_option("--checkpoint", tr_args.checkpoint, "Checkpoint directory")->required();
  translate->add_option("--input", tr_args.input, "Input image or directory")->required();
  translate->add_option("--out", tr_args.out, "Output directory")->required();
  translate->add_option("--n-styles", tr_args.n_styles, "Noise draws per input")->default_val(1);
  translate->add_option("--seed", tr_args.seed, "Noise seed")->default_val(0);
  translate->add_flag("--dry-run", tr_args.dry_run, "Validate and print the plan without running");

  EvaluateArgs ev_args;
  auto* evaluate = app.add_subcommand("evaluate", "Compute FID/KID between two image directories");
  evaluate->add_option("--real-dir", ev_args.real_dir, "Reference images")->required();
  evaluate->add_option("--fake-dir", ev_args.fake_dir, "Generated images")->required();
  evaluate->add_option("--extractor", ev_args.extractor, "Feature extractor id")->default_val("desk");
  evaluate->add_option("--out", ev_args.out, "Metrics JSON output path")->required();
  evaluate->add_option("--seed", ev_args.seed, "KID subset seed")->default_val(0);
  evaluate->add_flag("--dry-run", ev_args.dry_run, "Validate and print the plan without running");

  MakeToyArgs toy_args;
  auto* make_toy = app.add_subcommand("make-toy", "Generate the procedural two-domain toy dataset");
  make_toy->add_option("--out", toy_args.out, "Output directory")->required();
  make_toy->add_option("--n", toy_args.n, "Images per domain")->default_val(200);
  make_toy->add_option("--size", toy_args.size, "Image size in pixels")->default_val(64);
  make_toy->add_option("--seed", toy_args.seed, "Generation seed")->default_val(0);
  make_toy->add_flag("--dry-run", toy_args.dry_run, "Validate and print the plan without running");

  ReportParamsArgs rp_args;
  auto* report = app.add_subcommand("report-params", "Print trainable parameter counts for a configuration");
  report->add_option("--config", rp_args.config, "Run configuration (JSON)")->required();
  report->add_flag("--dry-run", rp_args.dry_run, "Validate and print the plan without running");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*translate) return cmd_translate(tr_args);
    if (*evaluate) return cmd_evaluate(ev_args);
    if (*make_toy) return cmd_make_toy(toy_args);
    if (*report) return cmd_report_params(rp_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
