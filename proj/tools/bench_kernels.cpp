// Timing harness comparing the serial reference kernels against the
// OpenMP (and, when built in, BLAS) paths, plus end-to-end step timings at
// the desk-scale training shape.

#include <chrono>
#include <cstdio>
#include <string>

#include "acl/train.hpp"

using namespace acl;

namespace {

double time_of(int reps, const std::function<void()>& fn) {
  fn();  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void bench_gemm() {
  struct Case {
    std::int64_t m, n, k;
  };
  std::printf("GEMM (float)            serial       omp      blas\n");
  for (Case c : {Case{64, 768, 576}, Case{16, 4096, 147}, Case{32, 1024, 256}, Case{128, 256, 1152}}) {
    Rng rng(1);
    auto a = Tensor<float>::randn({c.m, c.k}, rng);
    auto b = Tensor<float>::randn({c.k, c.n}, rng);
    Tensor<float> out({c.m, c.n});
    double flops = 2.0 * c.m * c.n * c.k;
    auto gf = [&](kern::GemmBackend be) {
      kern::set_gemm_backend(be);
      double t = time_of(20, [&] {
        kern::gemm(kern::Trans::N, kern::Trans::N, c.m, c.n, c.k, a.data(), b.data(), out.data(), false);
      });
      kern::set_gemm_backend(kern::GemmBackend::Auto);
      return flops / t / 1e9;
    };
    double serial = gf(kern::GemmBackend::Serial);
    double omp = gf(kern::GemmBackend::OpenMP);
    double blas = kern::blas_available() ? gf(kern::GemmBackend::Blas) : 0.0;
    std::printf("M=%4lld N=%5lld K=%5lld %7.2f GF %7.2f GF %7.2f GF   omp speedup %.2fx\n",
                (long long)c.m, (long long)c.n, (long long)c.k, serial, omp, blas, omp / serial);
  }
}

void bench_conv() {
  struct Case {
    std::int64_t n, cin, hw, cout, k, stride;
  };
  std::printf("\nconv2d forward (float)            reference   im2col+gemm\n");
  for (Case c : {Case{3, 16, 64, 16, 7, 1}, Case{3, 64, 16, 64, 3, 1}, Case{3, 16, 64, 32, 4, 2}}) {
    Rng rng(2);
    auto x = Tensor<float>::randn({c.n, c.cin, c.hw, c.hw}, rng);
    auto w = Tensor<float>::randn({c.cout, c.cin, c.k, c.k}, rng);
    auto b = Tensor<float>::randn({c.cout}, rng);
    Tensor<float> y;
    double t_ref = time_of(3, [&] { kern::conv2d_fwd_reference(x, w, b.data(), c.stride, c.k / 2, y); });
    double t_fast = time_of(10, [&] { kern::conv2d_fwd(x, w, b.data(), c.stride, c.k / 2, y); });
    std::printf("N%lld %3lldx%2lld^2 -> %3lld k%lld s%lld   %8.2f ms   %8.2f ms   speedup %.1fx\n", (long long)c.n,
                (long long)c.cin, (long long)c.hw, (long long)c.cout, (long long)c.k, (long long)c.stride,
                t_ref * 1e3, t_fast * 1e3, t_ref / t_fast);
  }
}

void bench_steps() {
  RunConfig cfg = run_config_preset("toy");
  cfg.threads = 0;
  gan::Trainer<float> trainer(cfg, 7);
  gan::MemorySource src;
  data::ToySpec spec;
  spec.image_size = cfg.image_size;
  Rng rs = Rng::derive(3, 1), rt = Rng::derive(3, 2);
  for (int i = 0; i < 12; ++i) {
    src.s.push_back(data::render_toy_sample(spec, true, rs).image);
    src.t.push_back(data::render_toy_sample(spec, false, rt).image);
  }
  trainer.set_source(&src);
  kern::reset_perf_counters();
  double t = time_of(3, [&] { trainer.train_one_iteration(); });
  auto pc = kern::perf_counters();
  std::printf("\ndesk-scale training iteration (2 d-steps + 1 g-step): %.0f ms\n", t * 1e3);
  std::printf("  kernel split per iteration: gemm %.0f ms (%lld calls), im2col %.0f ms, col2im %.0f ms\n",
              pc.gemm_s / 4 * 1e3, (long long)(pc.gemm_calls / 4), pc.im2col_s / 4 * 1e3, pc.col2im_s / 4 * 1e3);

  Rng rng(5);
  net::Generator<float> g(cfg.generator_config(), rng);
  Rng zr(6);
  auto x = ad::constant(Tensor<float>::uniform({3, 3, 64, 64}, zr, -1, 1));
  auto z = ad::constant(sample_noise<float>(3, cfg.h.d_z, zr));
  double t_fwd = time_of(5, [&] {
    ad::NoGrad ng;
    g.forward(x, z);
  });
  std::printf("generator forward (batch 3, no grad): %.0f ms\n", t_fwd * 1e3);
  double t_fb = time_of(5, [&] {
    auto out = g.forward(x, z);
    ad::backward(ad::mean_all(ad::square(out.rgb)));
    g.params().zero_grad();
  });
  std::printf("generator forward+backward (batch 3): %.0f ms\n", t_fb * 1e3);
}

}  // namespace

int main(int argc, char** argv) {
  bool steps_only = argc > 1 && std::string(argv[1]) == "--steps";
  std::printf("threads: %d, blas: %s\n", kern::threads(), kern::blas_available() ? "yes" : "no");
  if (!steps_only) {
    bench_gemm();
    bench_conv();
  }
  bench_steps();
  return 0;
}
