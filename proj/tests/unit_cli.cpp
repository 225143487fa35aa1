// End-to-end exercises of the aclgan binary (path passed as argv[1]).
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;

std::string g_binary;
fs::path g_root;

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run(const std::string& args) {
  std::string cmd = g_binary + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  std::array<char, 512> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t count_files(const fs::path& dir, const std::string& needle = "") {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename().string().find(needle) != std::string::npos) ++n;
  return n;
}

void write_tiny_config(const fs::path& p, int iters) {
  nlohmann::json j;
  j["preset"] = "toy";
  j["base_channels"] = 4;
  j["n_res_blocks"] = 1;
  j["n_scales"] = 1;
  j["n_layers"] = 2;
  j["n_style_downsample"] = 2;
  j["image_size"] = 16;
  j["load_size"] = 16;
  j["batch_size"] = 2;
  j["total_iters"] = iters;
  j["d_z"] = 4;
  j["threads"] = 1;
  j["log_every"] = 10;
  j["ckpt_every"] = 50;
  j["sample_every"] = 1000;
  std::ofstream(p) << j.dump(2);
}

}  // namespace

TEST_CASE("make-toy: counts, determinism, and validation") {
  fs::path dir = g_root / "toy";
  auto r = run("make-toy --out " + (dir / "a").string() + " --n 200 --size 64 --seed 9");
  CHECK(r.exit_code == 0);
  CHECK(count_files(dir / "a" / "domain_S") == 200);
  CHECK(count_files(dir / "a" / "domain_T") == 200);
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  auto r2 = run("make-toy --out " + (dir / "b").string() + " --n 200 --size 64 --seed 9");
  CHECK(r2.exit_code == 0);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(dir / "a" / "domain_S" / "00137.png") == slurp(dir / "b" / "domain_S" / "00137.png"));

  CHECK(run("make-toy --out " + (dir / "c").string() + " --n 0 --size 64 --seed 1").exit_code == 2);
  CHECK(run("make-toy --out x --bogus-flag 1").exit_code == 2);

  auto dry = run("make-toy --out " + (dir / "dry").string() + " --n 5 --size 16 --seed 1 --dry-run");
  CHECK(dry.exit_code == 0);
  CHECK_FALSE(fs::exists(dir / "dry"));
}

TEST_CASE("train smoke run, resume, and config validation") {
  fs::path dir = g_root / "train";
  fs::create_directories(dir);
  REQUIRE(run("make-toy --out " + (dir / "data").string() + " --n 8 --size 16 --seed 4").exit_code == 0);
  write_tiny_config(dir / "cfg.json", 60);

  auto dry = run("train --config " + (dir / "cfg.json").string() + " --data-root " + (dir / "data").string() +
                 " --out " + (dir / "dryout").string() + " --seed 1 --dry-run");
  CHECK(dry.exit_code == 0);
  CHECK_FALSE(fs::exists(dir / "dryout"));

  auto r = run("train --config " + (dir / "cfg.json").string() + " --data-root " + (dir / "data").string() +
               " --out " + (dir / "out").string() + " --seed 1");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "checkpoint" / "manifest.json"));
  CHECK(fs::exists(dir / "out" / "loss_log.jsonl"));
  CHECK(fs::exists(dir / "out" / "config_resolved.json"));
  {
    auto manifest = nlohmann::json::parse(slurp(dir / "out" / "checkpoint" / "manifest.json"));
    CHECK(manifest["iteration"] == 60);
  }

  // resume for 60 more iterations
  write_tiny_config(dir / "cfg2.json", 120);
  auto r2 = run("train --config " + (dir / "cfg2.json").string() + " --data-root " + (dir / "data").string() +
                " --out " + (dir / "out2").string() + " --seed 1 --resume " +
                (dir / "out" / "checkpoint").string());
  CHECK(r2.exit_code == 0);
  {
    auto manifest = nlohmann::json::parse(slurp(dir / "out2" / "checkpoint" / "manifest.json"));
    CHECK(manifest["iteration"] == 120);
  }

  // structurally different resume config is rejected
  {
    auto j = nlohmann::json::parse(slurp(dir / "cfg2.json"));
    j["base_channels"] = 8;
    std::ofstream(dir / "cfg3.json") << j.dump(2);
  }
  CHECK(run("train --config " + (dir / "cfg3.json").string() + " --data-root " + (dir / "data").string() +
            " --out " + (dir / "out3").string() + " --seed 1 --resume " + (dir / "out" / "checkpoint").string())
            .exit_code == 2);

  // typo'd hyperparameter key names the key and exits 2
  {
    auto j = nlohmann::json::parse(slurp(dir / "cfg.json"));
    j["lambda_ac1"] = 0.3;
    std::ofstream(dir / "typo.json") << j.dump(2);
  }
  auto bad = run("train --config " + (dir / "typo.json").string() + " --data-root " + (dir / "data").string() +
                 " --out " + (dir / "outx").string() + " --seed 1");
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("lambda_ac1") != std::string::npos);

  CHECK(run("train --config " + (dir / "cfg.json").string() + " --data-root " + (dir / "nodata").string() +
            " --out " + (dir / "outy").string() + " --seed 1")
            .exit_code == 2);
}

TEST_CASE("translate: counts, determinism, masks") {
  fs::path dir = g_root / "train";  // reuses the checkpoint from the train test
  fs::path ckpt = dir / "out" / "checkpoint";
  REQUIRE(fs::exists(ckpt / "manifest.json"));

  fs::path ins = g_root / "tr_in";
  fs::create_directories(ins);
  for (int i = 0; i < 5; ++i)
    fs::copy_file(dir / "data" / "domain_S" / ("0000" + std::to_string(i) + ".png"), ins / (std::to_string(i) + ".png"),
                  fs::copy_options::overwrite_existing);

  auto r = run("translate --checkpoint " + ckpt.string() + " --input " + (ins / "0.png").string() + " --out " +
               (g_root / "tr_out1").string() + " --n-styles 2 --seed 5");
  CHECK(r.exit_code == 0);
  CHECK(count_files(g_root / "tr_out1", "_mask") == 2);
  CHECK(count_files(g_root / "tr_out1", ".png") >= 4);  // 2 images + 2 masks (+ manifest json is not a png)
  CHECK(fs::exists(g_root / "tr_out1" / "resolved_config.json"));

  auto r2 = run("translate --checkpoint " + ckpt.string() + " --input " + (ins / "0.png").string() + " --out " +
                (g_root / "tr_out2").string() + " --n-styles 2 --seed 5");
  CHECK(r2.exit_code == 0);
  CHECK(slurp(g_root / "tr_out1" / "0_s0.png") == slurp(g_root / "tr_out2" / "0_s0.png"));
  CHECK(slurp(g_root / "tr_out1" / "0_s1.png") == slurp(g_root / "tr_out2" / "0_s1.png"));

  auto rd = run("translate --checkpoint " + ckpt.string() + " --input " + ins.string() + " --out " +
                (g_root / "tr_out3").string() + " --n-styles 3 --seed 5");
  CHECK(rd.exit_code == 0);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(g_root / "tr_out3")) {
    std::string name = e.path().filename().string();
    if (name.ends_with(".png") && name.find("_mask") == std::string::npos) ++images;
  }
  CHECK(images == 15);

  CHECK(run("translate --checkpoint " + (g_root / "nope").string() + " --input " + (ins / "0.png").string() +
            " --out " + (g_root / "tr_out4").string() + " --n-styles 1 --seed 5")
            .exit_code == 2);
}

TEST_CASE("evaluate: identity, ordering, and validation") {
  fs::path dir = g_root / "eval";
  REQUIRE(run("make-toy --out " + (dir / "data").string() + " --n 40 --size 32 --seed 11").exit_code == 0);
  fs::path ds = dir / "data" / "domain_S", dt = dir / "data" / "domain_T";

  auto same = run("evaluate --real-dir " + ds.string() + " --fake-dir " + ds.string() + " --out " +
                  (dir / "same.json").string());
  CHECK(same.exit_code == 0);
  auto j = nlohmann::json::parse(slurp(dir / "same.json"));
  CHECK(j["fid"].get<double>() < 1e-6);
  CHECK(j["n_real"] == 40);
  CHECK(j["extractor_id"] == "desk");
  CHECK(j.contains("kid_mean"));
  CHECK(j.contains("kid_std"));

  auto cross = run("evaluate --real-dir " + dt.string() + " --fake-dir " + ds.string() + " --out " +
                   (dir / "cross.json").string());
  CHECK(cross.exit_code == 0);
  auto jc = nlohmann::json::parse(slurp(dir / "cross.json"));
  CHECK(jc["fid"].get<double>() > 1e-3);

  auto unknown = run("evaluate --real-dir " + ds.string() + " --fake-dir " + dt.string() +
                     " --extractor inception --out " + (dir / "x.json").string());
  CHECK(unknown.exit_code == 2);
  CHECK(unknown.output.find("desk") != std::string::npos);  // lists available ids

  fs::create_directories(dir / "empty");
  CHECK(run("evaluate --real-dir " + (dir / "empty").string() + " --fake-dir " + ds.string() + " --out " +
            (dir / "y.json").string())
            .exit_code == 2);
}

TEST_CASE("report-params prints per-network counts") {
  fs::path dir = g_root / "params";
  fs::create_directories(dir);
  std::ofstream(dir / "toy.json") << R"({"preset": "toy"})";
  auto r = run("report-params --config " + (dir / "toy.json").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("G_S ") != std::string::npos);
  CHECK(r.output.find("D_hat ") != std::string::npos);
  CHECK(r.output.find("total ") != std::string::npos);

  std::ofstream(dir / "bad.json") << R"({"delta_min": 0.9, "delta_max": 0.1})";
  CHECK(run("report-params --config " + (dir / "bad.json").string()).exit_code == 2);
  CHECK(run("report-params --config " + (dir / "missing.json").string()).exit_code == 2);
}

TEST_CASE("usage errors exit 2") {
  CHECK(run("").exit_code == 2);
  CHECK(run("unknown-subcommand").exit_code == 2);
  CHECK(run("train --config x").exit_code == 2);  // missing required flags
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: unit_cli <path-to-aclgan-binary> [doctest args]\n");
    return 1;
  }
  g_binary = argv[1];
  g_root = fs::temp_directory_path() / ("aclgan_cli_" + std::to_string(::getpid()));
  fs::remove_all(g_root);
  fs::create_directories(g_root);
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  int rc = ctx.run();
  fs::remove_all(g_root);
  return rc;
}

