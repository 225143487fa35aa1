#pragma once

// Dense math kernels. Every hot kernel has a plain serial implementation
// (the reference the tests compare against) and an OpenMP version. The
// large matrix products can additionally go through OpenBLAS when the
// build finds it; kern::set_gemm_backend picks the route at runtime.
//
// Parallel loops are partitioned over independent output elements with a
// static schedule, so results do not depend on the thread count.

#include <omp.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <vector>

#include "acl/errors.hpp"
#include "acl/tensor.hpp"

#if defined(ACL_HAVE_OPENBLAS)
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace acl::kern {

using std::int64_t;

enum class GemmBackend { Auto, Serial, OpenMP, Blas };

namespace detail {
inline std::atomic<int>& thread_slot() {
  static std::atomic<int> n{0};
  return n;
}
inline std::atomic<GemmBackend>& backend_slot() {
  static std::atomic<GemmBackend> b{GemmBackend::Auto};
  return b;
}
}  // namespace detail

inline int threads() {
  int n = detail::thread_slot().load();
  return n > 0 ? n : omp_get_max_threads();
}

inline void set_threads(int n) {
  detail::thread_slot().store(n);
#if defined(ACL_HAVE_OPENBLAS)
  openblas_set_num_threads(n > 0 ? n : omp_get_max_threads());
#endif
}

inline GemmBackend gemm_backend() { return detail::backend_slot().load(); }
inline void set_gemm_backend(GemmBackend b) { detail::backend_slot().store(b); }

// Cumulative wall-clock per kernel family; the benchmark tool reads these.
struct PerfCounters {
  double gemm_s = 0, im2col_s = 0, col2im_s = 0;
  std::int64_t gemm_calls = 0;
};
namespace detail {
inline PerfCounters& perf_slot() {
  static PerfCounters p;
  return p;
}
struct PerfTimer {
  double& sink;
  std::chrono::steady_clock::time_point t0;
  explicit PerfTimer(double& sink) : sink(sink), t0(std::chrono::steady_clock::now()) {}
  ~PerfTimer() { sink += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};
}  // namespace detail
inline PerfCounters& perf_counters() { return detail::perf_slot(); }
inline void reset_perf_counters() { detail::perf_slot() = PerfCounters{}; }

inline bool blas_available() {
#if defined(ACL_HAVE_OPENBLAS)
  return true;
#else
  return false;
#endif
}

// ---------------------------------------------------------------------------
// GEMM: C (MxN) = op(A) * op(B), row-major. accumulate=false overwrites C.

// Panel/block sizes keep a (Kc x Nc) slab of B hot in L2 while C rows
// stream; each C element still accumulates k in ascending order, so the
// serial and OpenMP paths produce identical bits.
namespace detail {
constexpr int64_t kGemmNc = 512;
constexpr int64_t kGemmKc = 160;

template <class T>
inline void gemm_nn_tile(int64_t N, int64_t K, const T* a, const T* B, T* c, int64_t j0, int64_t j1) {
  for (int64_t k0 = 0; k0 < K; k0 += kGemmKc) {
    int64_t k1 = std::min(K, k0 + kGemmKc);
    for (int64_t k = k0; k < k1; ++k) {
      T av = a[k];
      const T* b = B + k * N;
      for (int64_t j = j0; j < j1; ++j) c[j] += av * b[j];
    }
  }
}
}  // namespace detail

template <class T>
void gemm_nn_serial(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  if (!accumulate)
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (int64_t j0 = 0; j0 < N; j0 += detail::kGemmNc) {
    int64_t j1 = std::min(N, j0 + detail::kGemmNc);
    for (int64_t i = 0; i < M; ++i) detail::gemm_nn_tile(N, K, A + i * K, B, C + i * N, j0, j1);
  }
}

template <class T>
void gemm_nn_omp(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  if (!accumulate) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t i = 0; i < M * N; ++i) C[i] = T(0);
  }
  int64_t npan = (N + detail::kGemmNc - 1) / detail::kGemmNc;
#pragma omp parallel for collapse(2) schedule(static) num_threads(threads())
  for (int64_t p = 0; p < npan; ++p)
    for (int64_t i = 0; i < M; ++i) {
      int64_t j0 = p * detail::kGemmNc;
      int64_t j1 = std::min(N, j0 + detail::kGemmNc);
      detail::gemm_nn_tile(N, K, A + i * K, B, C + i * N, j0, j1);
    }
}

// C[i,j] = sum_k A[i,k] * B[j,k]   (B given row-major as N x K).
// 2x4 register tiles cut the streaming of A/B rows fourfold.
namespace detail {
template <class T>
inline T simd_dot(const T* a, const T* b, int64_t K) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
  return acc;
}

// Four A rows per sweep over B keep each B row hot in L1 across the dots.
template <class T>
inline void gemm_nt_rows(int64_t N, int64_t K, const T* A, const T* B, T* C, int64_t i0, int64_t i1,
                         bool accumulate) {
  for (int64_t i = i0; i < i1; i += 4) {
    int64_t ilim = std::min(i1, i + 4);
    for (int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      for (int64_t ii = i; ii < ilim; ++ii) {
        T dot = simd_dot(A + ii * K, b, K);
        T* c = C + ii * N + j;
        *c = accumulate ? *c + dot : dot;
      }
    }
  }
}
}  // namespace detail

template <class T>
void gemm_nt_serial(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  detail::gemm_nt_rows(N, K, A, B, C, 0, M, accumulate);
}

template <class T>
void gemm_nt_omp(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  int64_t chunks = std::min<int64_t>(M, 4 * threads());
  if (chunks < 2) {
    detail::gemm_nt_rows(N, K, A, B, C, 0, M, accumulate);
    return;
  }
#pragma omp parallel for schedule(static) num_threads(threads())
  for (int64_t ch = 0; ch < chunks; ++ch) {
    int64_t i0 = M * ch / chunks, i1 = M * (ch + 1) / chunks;
    detail::gemm_nt_rows(N, K, A, B, C, i0, i1, accumulate);
  }
}

// C[i,j] = sum_k A[k,i] * B[k,j]   (A given row-major as K x M)
// Own kernels transpose A once and reuse the nn loop; the scratch is
// per-thread to keep concurrent callers independent.
namespace detail {
template <class T>
std::vector<T>& tn_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}
}  // namespace detail

template <class T>
void transpose(int64_t R, int64_t Ccols, const T* X, T* XT) {
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < Ccols; ++c) XT[c * R + r] = X[r * Ccols + c];
}

template <class T>
void gemm_tn_serial(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  auto& buf = detail::tn_scratch<T>();
  buf.resize(static_cast<std::size_t>(M * K));
  transpose(K, M, A, buf.data());
  gemm_nn_serial(M, N, K, buf.data(), B, C, accumulate);
}

template <class T>
void gemm_tn_omp(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  auto& buf = detail::tn_scratch<T>();
  buf.resize(static_cast<std::size_t>(M * K));
  transpose(K, M, A, buf.data());
  gemm_nn_omp(M, N, K, buf.data(), B, C, accumulate);
}

#if defined(ACL_HAVE_OPENBLAS)
inline void gemm_blas(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t M, int64_t N, int64_t K,
                      const float* A, int64_t lda, const float* B, int64_t ldb, float* C, bool accumulate) {
  cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(M), static_cast<int>(N), static_cast<int>(K), 1.0f, A,
              static_cast<int>(lda), B, static_cast<int>(ldb), accumulate ? 1.0f : 0.0f, C, static_cast<int>(N));
}
inline void gemm_blas(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int64_t M, int64_t N, int64_t K,
                      const double* A, int64_t lda, const double* B, int64_t ldb, double* C, bool accumulate) {
  cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(M), static_cast<int>(N), static_cast<int>(K), 1.0, A,
              static_cast<int>(lda), B, static_cast<int>(ldb), accumulate ? 1.0 : 0.0, C, static_cast<int>(N));
}
#endif

namespace detail {
inline bool use_parallel(int64_t work) { return threads() > 1 && work >= (1 << 13); }

template <class T>
constexpr bool blas_scalar = std::is_same_v<T, float> || std::is_same_v<T, double>;
}  // namespace detail

enum class Trans { N, T };

template <class T>
void gemm(Trans ta, Trans tb, int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  detail::PerfTimer timer(detail::perf_slot().gemm_s);
  ++detail::perf_slot().gemm_calls;
  GemmBackend be = gemm_backend();
  if (be == GemmBackend::Auto) {
    // Own OpenMP kernels win at the small shapes the desk config produces;
    // OpenBLAS takes over for the large panels of paper-scale runs.
    if (blas_available() && detail::blas_scalar<T> && M * N * K >= (int64_t(1) << 27))
      be = GemmBackend::Blas;
    else
      be = detail::use_parallel(M * N * K) ? GemmBackend::OpenMP : GemmBackend::Serial;
  }
#if defined(ACL_HAVE_OPENBLAS)
  if (be == GemmBackend::Blas) {
    if constexpr (detail::blas_scalar<T>) {
      gemm_blas(ta == Trans::N ? CblasNoTrans : CblasTrans, tb == Trans::N ? CblasNoTrans : CblasTrans, M, N, K, A,
                ta == Trans::N ? K : M, B, tb == Trans::N ? N : K, C, accumulate);
      return;
    }
    be = GemmBackend::OpenMP;
  }
#else
  if (be == GemmBackend::Blas) be = GemmBackend::OpenMP;
#endif
  bool par = be == GemmBackend::OpenMP;
  if (ta == Trans::N && tb == Trans::N)
    par ? gemm_nn_omp(M, N, K, A, B, C, accumulate) : gemm_nn_serial(M, N, K, A, B, C, accumulate);
  else if (ta == Trans::N && tb == Trans::T)
    par ? gemm_nt_omp(M, N, K, A, B, C, accumulate) : gemm_nt_serial(M, N, K, A, B, C, accumulate);
  else if (ta == Trans::T && tb == Trans::N)
    par ? gemm_tn_omp(M, N, K, A, B, C, accumulate) : gemm_tn_serial(M, N, K, A, B, C, accumulate);
  else
    throw ArgumentError("gemm: T/T variant not implemented");
}

// ---------------------------------------------------------------------------
// Convolution plumbing (NCHW, square kernel, zero padding).

struct ConvShape {
  int64_t n, cin, h, w;
  int64_t cout, k, stride, pad;
  int64_t ho, wo;

  static ConvShape make(const Shape& x, const Shape& wgt, int64_t stride, int64_t pad) {
    if (x.size() != 4) throw ArgumentError("conv2d: input must be NCHW, got " + shape_str(x));
    if (wgt.size() != 4 || wgt[2] != wgt[3])
      throw ArgumentError("conv2d: weight must be (Cout,Cin,k,k), got " + shape_str(wgt));
    if (x[1] != wgt[1])
      throw ArgumentError("conv2d: input channels " + std::to_string(x[1]) + " != weight channels " +
                          std::to_string(wgt[1]));
    if (stride < 1 || pad < 0) throw ArgumentError("conv2d: bad stride/pad");
    ConvShape s{x[0], x[1], x[2], x[3], wgt[0], wgt[2], stride, pad, 0, 0};
    s.ho = (s.h + 2 * pad - s.k) / stride + 1;
    s.wo = (s.w + 2 * pad - s.k) / stride + 1;
    if (s.h + 2 * pad < s.k || s.w + 2 * pad < s.k || s.ho < 1 || s.wo < 1)
      throw ArgumentError("conv2d: input " + shape_str(x) + " too small for kernel " + std::to_string(s.k));
    return s;
  }

  int64_t cols_rows() const { return cin * k * k; }
  int64_t cols_cols() const { return ho * wo; }
};

// cols is (cin*k*k) x (ho*wo); row order is (c, ky, kx) with c outermost,
// matching the reference loop nest so both paths sum in the same order.
template <class T>
void im2col(const T* x, const ConvShape& s, T* cols) {
  detail::PerfTimer timer(detail::perf_slot().im2col_s);
  int64_t rows = s.cols_rows();
#pragma omp parallel for schedule(static) num_threads(threads()) if (rows * s.cols_cols() > (1 << 14))
  for (int64_t r = 0; r < rows; ++r) {
    int64_t c = r / (s.k * s.k);
    int64_t ky = (r / s.k) % s.k;
    int64_t kx = r % s.k;
    T* out = cols + r * s.cols_cols();
    const T* xc = x + c * s.h * s.w;
    if (s.stride == 1) {
      // contiguous row segments: [ox0, ox1) maps onto x columns directly
      int64_t ox0 = std::max<int64_t>(0, s.pad - kx);
      int64_t ox1 = std::min(s.wo, s.w + s.pad - kx);
      for (int64_t oy = 0; oy < s.ho; ++oy) {
        int64_t iy = oy + ky - s.pad;
        T* orow = out + oy * s.wo;
        if (iy < 0 || iy >= s.h) {
          for (int64_t ox = 0; ox < s.wo; ++ox) orow[ox] = T(0);
          continue;
        }
        for (int64_t ox = 0; ox < ox0; ++ox) orow[ox] = T(0);
        const T* xrow = xc + iy * s.w + (ox0 + kx - s.pad);
        std::copy_n(xrow, ox1 - ox0, orow + ox0);
        for (int64_t ox = ox1; ox < s.wo; ++ox) orow[ox] = T(0);
      }
      continue;
    }
    for (int64_t oy = 0; oy < s.ho; ++oy) {
      int64_t iy = oy * s.stride + ky - s.pad;
      if (iy < 0 || iy >= s.h) {
        for (int64_t ox = 0; ox < s.wo; ++ox) out[oy * s.wo + ox] = T(0);
        continue;
      }
      const T* xrow = xc + iy * s.w;
      for (int64_t ox = 0; ox < s.wo; ++ox) {
        int64_t ix = ox * s.stride + kx - s.pad;
        out[oy * s.wo + ox] = (ix >= 0 && ix < s.w) ? xrow[ix] : T(0);
      }
    }
  }
}

// Gather form of the col2im scatter: each input pixel sums the column
// entries that touch it, so the loop parallelises without races and the
// destination needs no pre-zeroing.
template <class T>
void col2im(const T* cols, const ConvShape& s, T* x) {
  detail::PerfTimer timer(detail::perf_slot().col2im_s);
  if (s.stride == 1) {
    // per channel: the k*k shifted column rows add onto contiguous spans
#pragma omp parallel for schedule(static) num_threads(threads()) if (s.cin > 1 && s.cin* s.h* s.w > (1 << 14))
    for (int64_t c = 0; c < s.cin; ++c) {
      T* plane = x + c * s.h * s.w;
      for (int64_t i = 0; i < s.h * s.w; ++i) plane[i] = T(0);
      for (int64_t ky = 0; ky < s.k; ++ky)
        for (int64_t kx = 0; kx < s.k; ++kx) {
          const T* colrow = cols + ((c * s.k + ky) * s.k + kx) * s.cols_cols();
          int64_t ox0 = std::max<int64_t>(0, s.pad - kx);
          int64_t ox1 = std::min(s.wo, s.w + s.pad - kx);
          if (ox1 <= ox0) continue;
          for (int64_t oy = 0; oy < s.ho; ++oy) {
            int64_t iy = oy + ky - s.pad;
            if (iy < 0 || iy >= s.h) continue;
            T* dst = plane + iy * s.w + (ox0 + kx - s.pad);
            const T* src = colrow + oy * s.wo + ox0;
            for (int64_t t = 0; t < ox1 - ox0; ++t) dst[t] += src[t];
          }
        }
    }
    return;
  }
#pragma omp parallel for schedule(static) num_threads(threads()) if (s.cin * s.h * s.w > (1 << 14))
  for (int64_t c = 0; c < s.cin; ++c) {
    for (int64_t iy = 0; iy < s.h; ++iy) {
      for (int64_t ix = 0; ix < s.w; ++ix) {
        T acc = T(0);
        for (int64_t ky = 0; ky < s.k; ++ky) {
          int64_t oy_num = iy + s.pad - ky;
          if (oy_num < 0 || oy_num % s.stride) continue;
          int64_t oy = oy_num / s.stride;
          if (oy >= s.ho) continue;
          for (int64_t kx = 0; kx < s.k; ++kx) {
            int64_t ox_num = ix + s.pad - kx;
            if (ox_num < 0 || ox_num % s.stride) continue;
            int64_t ox = ox_num / s.stride;
            if (ox >= s.wo) continue;
            int64_t r = (c * s.k + ky) * s.k + kx;
            acc += cols[r * s.cols_cols() + oy * s.wo + ox];
          }
        }
        x[(c * s.h + iy) * s.w + ix] = acc;
      }
    }
  }
}

namespace detail {
template <class T>
std::vector<T>& col_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}
}  // namespace detail

// y = conv(x, w) + b. Production path: per-image im2col + GEMM.
template <class T>
void conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const T* bias, int64_t stride, int64_t pad, Tensor<T>& y) {
  ConvShape s = ConvShape::make(x.shape(), w.shape(), stride, pad);
  y = Tensor<T>::uninit({s.n, s.cout, s.ho, s.wo});
  auto& cols = detail::col_scratch<T>();
  cols.resize(static_cast<std::size_t>(s.cols_rows() * s.cols_cols()));
  for (int64_t n = 0; n < s.n; ++n) {
    im2col(x.data() + n * s.cin * s.h * s.w, s, cols.data());
    T* yn = y.data() + n * s.cout * s.ho * s.wo;
    gemm(Trans::N, Trans::N, s.cout, s.cols_cols(), s.cols_rows(), w.data(), cols.data(), yn, false);
    if (bias) {
      for (int64_t co = 0; co < s.cout; ++co) {
        T bv = bias[co];
        T* row = yn + co * s.ho * s.wo;
        for (int64_t p = 0; p < s.ho * s.wo; ++p) row[p] += bv;
      }
    }
  }
}

// Direct serial loops; the oracle the GEMM path is tested against.
template <class T>
void conv2d_fwd_reference(const Tensor<T>& x, const Tensor<T>& w, const T* bias, int64_t stride, int64_t pad,
                          Tensor<T>& y) {
  ConvShape s = ConvShape::make(x.shape(), w.shape(), stride, pad);
  y = Tensor<T>({s.n, s.cout, s.ho, s.wo});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t co = 0; co < s.cout; ++co)
      for (int64_t oy = 0; oy < s.ho; ++oy)
        for (int64_t ox = 0; ox < s.wo; ++ox) {
          T acc = bias ? bias[co] : T(0);
          for (int64_t ci = 0; ci < s.cin; ++ci)
            for (int64_t ky = 0; ky < s.k; ++ky)
              for (int64_t kx = 0; kx < s.k; ++kx) {
                int64_t iy = oy * s.stride + ky - s.pad;
                int64_t ix = ox * s.stride + kx - s.pad;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                acc += x[x.idx4(n, ci, iy, ix)] * w[w.idx4(co, ci, ky, kx)];
              }
          y[y.idx4(n, co, oy, ox)] = acc;
        }
}

template <class T>
void conv2d_bwd_data(const Tensor<T>& dy, const Tensor<T>& w, const ConvShape& s, Tensor<T>& dx) {
  dx = Tensor<T>::uninit({s.n, s.cin, s.h, s.w});
  auto& cols = detail::col_scratch<T>();
  cols.resize(static_cast<std::size_t>(s.cols_rows() * s.cols_cols()));
  for (int64_t n = 0; n < s.n; ++n) {
    // dcols = W^T * dy_n
    gemm(Trans::T, Trans::N, s.cols_rows(), s.cols_cols(), s.cout, w.data(), dy.data() + n * s.cout * s.ho * s.wo,
         cols.data(), false);
    col2im(cols.data(), s, dx.data() + n * s.cin * s.h * s.w);
  }
}

template <class T>
void conv2d_bwd_data_reference(const Tensor<T>& dy, const Tensor<T>& w, const ConvShape& s, Tensor<T>& dx) {
  dx = Tensor<T>({s.n, s.cin, s.h, s.w});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t co = 0; co < s.cout; ++co)
      for (int64_t oy = 0; oy < s.ho; ++oy)
        for (int64_t ox = 0; ox < s.wo; ++ox) {
          T g = dy[dy.idx4(n, co, oy, ox)];
          for (int64_t ci = 0; ci < s.cin; ++ci)
            for (int64_t ky = 0; ky < s.k; ++ky)
              for (int64_t kx = 0; kx < s.k; ++kx) {
                int64_t iy = oy * s.stride + ky - s.pad;
                int64_t ix = ox * s.stride + kx - s.pad;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                dx[dx.idx4(n, ci, iy, ix)] += g * w[w.idx4(co, ci, ky, kx)];
              }
        }
}

template <class T>
void conv2d_bwd_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvShape& s, Tensor<T>& dw, Tensor<T>* db) {
  dw = Tensor<T>::uninit({s.cout, s.cin, s.k, s.k});
  auto& cols = detail::col_scratch<T>();
  cols.resize(static_cast<std::size_t>(s.cols_rows() * s.cols_cols()));
  for (int64_t n = 0; n < s.n; ++n) {
    im2col(x.data() + n * s.cin * s.h * s.w, s, cols.data());
    // dW += dy_n * cols^T
    gemm(Trans::N, Trans::T, s.cout, s.cols_rows(), s.cols_cols(), dy.data() + n * s.cout * s.ho * s.wo, cols.data(),
         dw.data(), n > 0);
  }
  if (db) {
    *db = Tensor<T>({s.cout});
    for (int64_t n = 0; n < s.n; ++n)
      for (int64_t co = 0; co < s.cout; ++co) {
        const T* row = dy.data() + (n * s.cout + co) * s.ho * s.wo;
        T acc = T(0);
        for (int64_t p = 0; p < s.ho * s.wo; ++p) acc += row[p];
        (*db)[co] += acc;
      }
  }
}

template <class T>
void conv2d_bwd_weight_reference(const Tensor<T>& x, const Tensor<T>& dy, const ConvShape& s, Tensor<T>& dw,
                                 Tensor<T>* db) {
  dw = Tensor<T>({s.cout, s.cin, s.k, s.k});
  if (db) *db = Tensor<T>({s.cout});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t co = 0; co < s.cout; ++co)
      for (int64_t oy = 0; oy < s.ho; ++oy)
        for (int64_t ox = 0; ox < s.wo; ++ox) {
          T g = dy[dy.idx4(n, co, oy, ox)];
          if (db) (*db)[co] += g;
          for (int64_t ci = 0; ci < s.cin; ++ci)
            for (int64_t ky = 0; ky < s.k; ++ky)
              for (int64_t kx = 0; kx < s.k; ++kx) {
                int64_t iy = oy * s.stride + ky - s.pad;
                int64_t ix = ox * s.stride + kx - s.pad;
                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                dw[dw.idx4(co, ci, ky, kx)] += g * x[x.idx4(n, ci, iy, ix)];
              }
        }
}

// ---------------------------------------------------------------------------
// 3x3 stride-2 pad-1 average pooling (border windows average valid taps only).

template <class T>
void avgpool3s2_fwd(const Tensor<T>& x, Tensor<T>& y) {
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int64_t ho = (h + 2 - 3) / 2 + 1, wo = (w + 2 - 3) / 2 + 1;
  y = Tensor<T>::uninit({n, c, ho, wo});
  int64_t planes = n * c;
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes * ho * wo > (1 << 13))
  for (int64_t p = 0; p < planes; ++p) {
    const T* xin = x.data() + p * h * w;
    T* yout = y.data() + p * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        int cnt = 0;
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            int64_t iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            acc += xin[iy * w + ix];
            ++cnt;
          }
        yout[oy * wo + ox] = acc / static_cast<T>(cnt);
      }
  }
}

template <class T>
void avgpool3s2_bwd(const Tensor<T>& dy, const Shape& xshape, Tensor<T>& dx) {
  int64_t n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3];
  int64_t ho = dy.dim(2), wo = dy.dim(3);
  dx = Tensor<T>({n, c, h, w});
  int64_t planes = n * c;
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes * h * w > (1 << 13))
  for (int64_t p = 0; p < planes; ++p) {
    const T* g = dy.data() + p * ho * wo;
    T* out = dx.data() + p * h * w;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        int cnt = 0;
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            int64_t iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) ++cnt;
          }
        T share = g[oy * wo + ox] / static_cast<T>(cnt);
        for (int64_t ky = 0; ky < 3; ++ky)
          for (int64_t kx = 0; kx < 3; ++kx) {
            int64_t iy = oy * 2 + ky - 1, ix = ox * 2 + kx - 1;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) out[iy * w + ix] += share;
          }
      }
  }
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling.

template <class T>
void upsample2_fwd(const Tensor<T>& x, Tensor<T>& y) {
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  y = Tensor<T>::uninit({n, c, h * 2, w * 2});
  int64_t planes = n * c;
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes * h * w > (1 << 13))
  for (int64_t p = 0; p < planes; ++p) {
    const T* xin = x.data() + p * h * w;
    T* yout = y.data() + p * 4 * h * w;
    for (int64_t iy = 0; iy < h; ++iy)
      for (int64_t ix = 0; ix < w; ++ix) {
        T v = xin[iy * w + ix];
        T* r0 = yout + (2 * iy) * 2 * w + 2 * ix;
        T* r1 = r0 + 2 * w;
        r0[0] = r0[1] = r1[0] = r1[1] = v;
      }
  }
}

template <class T>
void upsample2_bwd(const Tensor<T>& dy, Tensor<T>& dx) {
  int64_t n = dy.dim(0), c = dy.dim(1), h2 = dy.dim(2), w2 = dy.dim(3);
  int64_t h = h2 / 2, w = w2 / 2;
  dx = Tensor<T>::uninit({n, c, h, w});
  int64_t planes = n * c;
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes * h * w > (1 << 13))
  for (int64_t p = 0; p < planes; ++p) {
    const T* g = dy.data() + p * h2 * w2;
    T* out = dx.data() + p * h * w;
    for (int64_t iy = 0; iy < h; ++iy)
      for (int64_t ix = 0; ix < w; ++ix) {
        const T* r0 = g + (2 * iy) * w2 + 2 * ix;
        const T* r1 = r0 + w2;
        out[iy * w + ix] = r0[0] + r0[1] + r1[0] + r1[1];
      }
  }
}

// ---------------------------------------------------------------------------
// Reflection padding (no repeated edge pixel, PyTorch convention).

template <class T>
void pad_reflect_fwd(const Tensor<T>& x, int64_t p, Tensor<T>& y) {
  int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (p >= h || p >= w) throw ArgumentError("pad_reflect: padding exceeds input size");
  y = Tensor<T>::uninit({n, c, h + 2 * p, w + 2 * p});
  int64_t planes = n * c, hp = h + 2 * p, wp = w + 2 * p;
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes * hp * wp > (1 << 13))
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* xin = x.data() + pl * h * w;
    T* yout = y.data() + pl * hp * wp;
    for (int64_t oy = 0; oy < hp; ++oy) {
      int64_t iy = oy - p;
      if (iy < 0) iy = -iy;
      if (iy >= h) iy = 2 * (h - 1) - iy;
      for (int64_t ox = 0; ox < wp; ++ox) {
        int64_t ix = ox - p;
        if (ix < 0) ix = -ix;
        if (ix >= w) ix = 2 * (w - 1) - ix;
        yout[oy * wp + ox] = xin[iy * w + ix];
      }
    }
  }
}

template <class T>
void pad_reflect_bwd(const Tensor<T>& dy, int64_t p, const Shape& xshape, Tensor<T>& dx) {
  int64_t n = xshape[0], c = xshape[1], h = xshape[2], w = xshape[3];
  int64_t hp = h + 2 * p, wp = w + 2 * p;
  dx = Tensor<T>({n, c, h, w});
  int64_t planes = n * c;
  // Scatter-add stays serial per plane; planes are independent.
#pragma omp parallel for schedule(static) num_threads(threads()) if (planes > 1 && planes * h * w > (1 << 13))
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* g = dy.data() + pl * hp * wp;
    T* out = dx.data() + pl * h * w;
    for (int64_t oy = 0; oy < hp; ++oy) {
      int64_t iy = oy - p;
      if (iy < 0) iy = -iy;
      if (iy >= h) iy = 2 * (h - 1) - iy;
      for (int64_t ox = 0; ox < wp; ++ox) {
        int64_t ix = ox - p;
        if (ix < 0) ix = -ix;
        if (ix >= w) ix = 2 * (w - 1) - ix;
        out[iy * w + ix] += g[oy * wp + ox];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Bilinear resize for data augmentation (half-pixel centres).

template <class T>
void resize_bilinear(const Tensor<T>& x, int64_t ho, int64_t wo, Tensor<T>& y) {
  if (x.ndim() != 3) throw ArgumentError("resize_bilinear: expected CHW");
  int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (ho < 1 || wo < 1) throw ArgumentError("resize_bilinear: bad target size");
  y = Tensor<T>::uninit({c, ho, wo});
  double sy = static_cast<double>(h) / static_cast<double>(ho);
  double sx = static_cast<double>(w) / static_cast<double>(wo);
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* xin = x.data() + ch * h * w;
    T* yout = y.data() + ch * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy) {
      double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
      int64_t y0 = static_cast<int64_t>(std::floor(fy));
      double wy = fy - static_cast<double>(y0);
      int64_t y0c = std::clamp<int64_t>(y0, 0, h - 1), y1c = std::clamp<int64_t>(y0 + 1, 0, h - 1);
      for (int64_t ox = 0; ox < wo; ++ox) {
        double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
        int64_t x0 = static_cast<int64_t>(std::floor(fx));
        double wx = fx - static_cast<double>(x0);
        int64_t x0c = std::clamp<int64_t>(x0, 0, w - 1), x1c = std::clamp<int64_t>(x0 + 1, 0, w - 1);
        double v = (1 - wy) * ((1 - wx) * xin[y0c * w + x0c] + wx * xin[y0c * w + x1c]) +
                   wy * ((1 - wx) * xin[y1c * w + x0c] + wx * xin[y1c * w + x1c]);
        yout[oy * wo + ox] = static_cast<T>(v);
      }
    }
  }
}

}  // namespace acl::kern
