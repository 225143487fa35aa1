#pragma once

// Define-by-run reverse-mode autodiff on Tensor<T>. Each op computes its
// value eagerly and records a closure that scatters the output gradient
// into its parents. backward() walks nodes in reverse creation order,
// which is a valid topological order because parents always exist before
// their children.
//
// Gradient buffers are allocated on first contribution (moved in when the
// contribution is freshly computed), and the broadcast helpers special-case
// the NCHW patterns the networks actually use.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "acl/kernels.hpp"
#include "acl/tensor.hpp"

namespace acl::ad {

using std::int64_t;

template <class T>
struct Node;

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
inline std::uint64_t next_id() {
  static std::atomic<std::uint64_t> c{0};
  return ++c;
}
inline bool& grad_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  int64_t n = dst.size();
  T* d = dst.data();
  const T* s = src.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (n > (1 << 16))
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_flag(); }

struct NoGrad {
  bool prev;
  NoGrad() : prev(detail::grad_flag()) { detail::grad_flag() = false; }
  ~NoGrad() { detail::grad_flag() = prev; }
  NoGrad(const NoGrad&) = delete;
};

template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;
  std::vector<Var<T>> parents;
  std::function<void(Node<T>&)> backfn;
  bool requires_grad = false;
  bool leaf = false;
  bool grad_ready = false;
  std::uint64_t id = 0;
  std::string name;

  Tensor<T>& g() {
    if (!grad_ready) {
      grad = Tensor<T>(val.shape());  // zero-filled
      grad_ready = true;
    }
    return grad;
  }

  // First contribution takes ownership / copies; later ones accumulate.
  void accum(Tensor<T>&& t) {
    if (!grad_ready) {
      grad = std::move(t);
      grad_ready = true;
    } else {
      detail::add_into(grad, t);
    }
  }
  void accum(const Tensor<T>& t) {
    if (!grad_ready) {
      grad = t;
      grad_ready = true;
    } else {
      detail::add_into(grad, t);
    }
  }

  void zero_grad() {
    grad = Tensor<T>();
    grad_ready = false;
  }
};

template <class T>
Var<T> leaf(Tensor<T> v, bool requires_grad, std::string name = "") {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  n->leaf = true;
  n->id = detail::next_id();
  n->name = std::move(name);
  return n;
}

template <class T>
Var<T> constant(Tensor<T> v) {
  return leaf(std::move(v), false);
}

namespace detail {

template <class T>
Var<T> wrap(Tensor<T> v, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backfn) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(v);
  n->id = next_id();
  bool track = grad_enabled();
  if (track) {
    bool need = false;
    for (const auto& p : parents) need = need || p->requires_grad;
    track = need;
  }
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return n;
}

// --- broadcast classification -----------------------------------------------
// Shapes must have equal rank; a dim broadcasts when it is 1. The 4-D
// patterns used by the networks get dedicated loops.

enum class BKind {
  Same,     // identical shape
  Scalar,   // single element
  PlaneNC,  // (N,C,1,1) against (N,C,H,W): one value per (n,c) plane
  Plane1C,  // (1,C,1,1): one value per channel
  PlaneN1,  // (N,1,1,1): one value per sample
  VecN1HW,  // (N,1,H,W): a spatial map shared across channels
  Generic
};

struct BInfo {
  BKind kind = BKind::Generic;
  int64_t n = 0, c = 0, hw = 0;
};

inline BInfo classify(const Shape& s, const Shape& out) {
  BInfo b;
  if (s == out) {
    b.kind = BKind::Same;
    return b;
  }
  int64_t numel = 1;
  for (auto d : s) numel *= d;
  if (numel == 1) {
    b.kind = BKind::Scalar;
    return b;
  }
  if (s.size() == 4 && out.size() == 4) {
    b.n = out[0];
    b.c = out[1];
    b.hw = out[2] * out[3];
    if (s[0] == out[0] && s[1] == out[1] && s[2] == 1 && s[3] == 1) {
      b.kind = BKind::PlaneNC;
      return b;
    }
    if (s[0] == 1 && s[1] == out[1] && s[2] == 1 && s[3] == 1) {
      b.kind = BKind::Plane1C;
      return b;
    }
    if (s[0] == out[0] && s[1] == 1 && s[2] == 1 && s[3] == 1) {
      b.kind = BKind::PlaneN1;
      return b;
    }
    if (s[0] == out[0] && s[1] == 1 && s[2] == out[2] && s[3] == out[3]) {
      b.kind = BKind::VecN1HW;
      return b;
    }
  }
  b.kind = BKind::Generic;
  return b;
}

inline std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  std::vector<int64_t> st(out.size(), 0);
  int64_t run = 1;
  for (int d = static_cast<int>(out.size()) - 1; d >= 0; --d) {
    if (shape[d] == out[d]) {
      st[d] = shape[d] == 1 ? 0 : run;
    } else if (shape[d] == 1) {
      st[d] = 0;
    } else {
      throw ArgumentError("shapes " + shape_str(shape) + " and " + shape_str(out) + " do not broadcast");
    }
    run *= shape[d];
  }
  return st;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size())
    throw ArgumentError("broadcast requires equal ranks, got " + shape_str(a) + " vs " + shape_str(b));
  Shape out(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] == b[d] || b[d] == 1)
      out[d] = a[d];
    else if (a[d] == 1)
      out[d] = b[d];
    else
      throw ArgumentError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
  }
  return out;
}

// out[i] = f(a[...], b[...]) with b the broadcast side when kinds differ.
template <class T, class F>
void zip_small_b(Tensor<T>& out, const Tensor<T>& a, const Tensor<T>& b, BInfo info, F f) {
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  int64_t planes = info.n * info.c, hw = info.hw;
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (planes * hw > (1 << 16))
  for (int64_t p = 0; p < planes; ++p) {
    const T* ap = pa + p * hw;
    T* op = po + p * hw;
    if (info.kind == BKind::VecN1HW) {
      const T* bp = pb + (p / info.c) * hw;
      for (int64_t i = 0; i < hw; ++i) op[i] = f(ap[i], bp[i]);
    } else {
      T bv = info.kind == BKind::PlaneNC   ? pb[p]
             : info.kind == BKind::Plane1C ? pb[p % info.c]
                                           : pb[p / info.c];
      for (int64_t i = 0; i < hw; ++i) op[i] = f(ap[i], bv);
    }
  }
}

template <class T, class F>
Tensor<T> broadcast_zip(const Tensor<T>& a, const Tensor<T>& b, F f) {
  BInfo ba = classify(a.shape(), b.shape());
  if (ba.kind == BKind::Same) {
    Tensor<T> out = Tensor<T>::uninit(a.shape());
    int64_t n = out.size();
    const T *pa = a.data(), *pb = b.data();
    T* po = out.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (n > (1 << 16))
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }

  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out = Tensor<T>::uninit(os);
  BInfo bb = classify(b.shape(), os);
  BInfo baa = classify(a.shape(), os);
  if (baa.kind == BKind::Same && bb.kind != BKind::Generic && bb.kind != BKind::Same) {
    if (bb.kind == BKind::Scalar) {
      T bv = b[0];
      const T* pa = a.data();
      T* po = out.data();
      for (int64_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], bv);
    } else {
      zip_small_b(out, a, b, bb, f);
    }
    return out;
  }
  if (bb.kind == BKind::Same && baa.kind != BKind::Generic && baa.kind != BKind::Same) {
    auto swapped = [&f](T x, T y) { return f(y, x); };
    if (baa.kind == BKind::Scalar) {
      T av = a[0];
      const T* pb = b.data();
      T* po = out.data();
      for (int64_t i = 0; i < out.size(); ++i) po[i] = f(av, pb[i]);
    } else {
      zip_small_b(out, b, a, baa, swapped);
    }
    return out;
  }

  // generic odometer walk
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  int nd = static_cast<int>(os.size());
  std::vector<int64_t> idx(nd, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t o = 0; o < out.size(); ++o) {
    out[o] = f(a[ia], b[ib]);
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      idx[d] = 0;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
    }
  }
  return out;
}

// Sum `g` down to `target` shape (inverse of broadcasting).
template <class T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  BInfo info = classify(target, g.shape());
  const T* pg = g.data();
  if (info.kind == BKind::Scalar) {
    Tensor<T> out(target);
    T acc = T(0);
    for (int64_t i = 0; i < g.size(); ++i) acc += pg[i];
    out[0] = acc;
    return out;
  }
  if (info.kind == BKind::PlaneNC || info.kind == BKind::Plane1C || info.kind == BKind::PlaneN1 ||
      info.kind == BKind::VecN1HW) {
    Tensor<T> out(target);  // zeroed; accumulation below
    T* po = out.data();
    int64_t planes = info.n * info.c, hw = info.hw;
    if (info.kind == BKind::PlaneNC) {
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (planes * hw > (1 << 16))
      for (int64_t p = 0; p < planes; ++p) {
        const T* gp = pg + p * hw;
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) acc += gp[i];
        po[p] = acc;
      }
    } else if (info.kind == BKind::VecN1HW) {
      for (int64_t p = 0; p < planes; ++p) {
        const T* gp = pg + p * hw;
        T* op = po + (p / info.c) * hw;
        for (int64_t i = 0; i < hw; ++i) op[i] += gp[i];
      }
    } else {
      for (int64_t p = 0; p < planes; ++p) {
        const T* gp = pg + p * hw;
        T acc = T(0);
        for (int64_t i = 0; i < hw; ++i) acc += gp[i];
        po[info.kind == BKind::Plane1C ? p % info.c : p / info.c] += acc;
      }
    }
    return out;
  }

  Tensor<T> out(target);
  auto st = broadcast_strides(target, g.shape());
  int nd = static_cast<int>(g.shape().size());
  std::vector<int64_t> idx(nd, 0);
  int64_t it = 0;
  for (int64_t o = 0; o < g.size(); ++o) {
    out[it] += g[o];
    for (int d = nd - 1; d >= 0; --d) {
      ++idx[d];
      it += st[d];
      if (idx[d] < g.shape()[d]) break;
      idx[d] = 0;
      it -= st[d] * g.shape()[d];
    }
  }
  return out;
}

template <class T>
void add_reduced(Node<T>& parent, const Tensor<T>& g) {
  if (parent.val.same_shape(g))
    parent.accum(g);
  else
    parent.accum(reduce_to(g, parent.val.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Engine

template <class T>
void backward(const Var<T>& root) {
  if (root->val.size() != 1) throw ArgumentError("backward: root must be scalar");
  if (!root->requires_grad) throw ArgumentError("backward: root does not require grad");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<Node<T>*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node<T>* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](const Node<T>* a, const Node<T>* b) { return a->id > b->id; });
  root->g().fill(T(1));
  for (Node<T>* n : order)
    if (n->backfn && n->grad_ready) n->backfn(*n);
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {
template <class T, class FwdF, class BwdF>
Var<T> unary(const Var<T>& x, FwdF fwd, BwdF dfdx_from_xy) {
  Tensor<T> y = Tensor<T>::uninit(x->val.shape());
  int64_t n = y.size();
  const T* px = x->val.data();
  T* py = y.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (n > (1 << 16))
  for (int64_t i = 0; i < n; ++i) py[i] = fwd(px[i]);
  Var<T> xp = x;
  return wrap<T>(std::move(y), {x}, [xp, dfdx_from_xy](Node<T>& self) {
    if (!xp->requires_grad) return;
    const T* px2 = xp->val.data();
    const T* py2 = self.val.data();
    const T* go = self.grad.data();
    int64_t m = xp->val.size();
    bool fresh = !xp->grad_ready;
    if (fresh) {
      xp->grad = Tensor<T>::uninit(xp->val.shape());
      xp->grad_ready = true;
    }
    T* pg = xp->grad.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (m > (1 << 16))
    for (int64_t i = 0; i < m; ++i) {
      T v = go[i] * dfdx_from_xy(px2[i], py2[i]);
      if (fresh)
        pg[i] = v;
      else
        pg[i] += v;
    }
  });
}
}  // namespace detail

template <class T>
Var<T> relu(const Var<T>& x) {
  // The negative branch multiplies instead of returning 0 so NaN inputs
  // stay NaN and surface in the loss checks.
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0) * v; }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, double slope = 0.2) {
  T s = static_cast<T>(slope);
  return detail::unary(
      x, [s](T v) { return v > T(0) ? v : s * v; }, [s](T v, T) { return v > T(0) ? T(1) : s; });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> abs(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return v < T(0) ? -v : v; }, [](T v, T) { return v < T(0) ? T(-1) : T(1); });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> sqrt(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Var<T> recip(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

// a*x + b with scalar constants.
template <class T>
Var<T> affine(const Var<T>& x, double a, double b) {
  T ta = static_cast<T>(a), tb = static_cast<T>(b);
  return detail::unary(
      x, [ta, tb](T v) { return ta * v + tb; }, [ta](T, T) { return ta; });
}

template <class T>
Var<T> scale(const Var<T>& x, double a) {
  return affine(x, a, 0.0);
}

template <class T>
Var<T> neg(const Var<T>& x) {
  return affine(x, -1.0, 0.0);
}

// ---------------------------------------------------------------------------
// Binary with broadcasting (equal ranks; size-1 dims broadcast)

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = detail::broadcast_zip(a->val, b->val, [](T u, T v) { return u + v; });
  Var<T> ap = a, bp = b;
  return detail::wrap<T>(std::move(y), {a, b}, [ap, bp](Node<T>& self) {
    if (ap->requires_grad) detail::add_reduced(*ap, self.grad);
    if (bp->requires_grad) detail::add_reduced(*bp, self.grad);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = detail::broadcast_zip(a->val, b->val, [](T u, T v) { return u - v; });
  Var<T> ap = a, bp = b;
  return detail::wrap<T>(std::move(y), {a, b}, [ap, bp](Node<T>& self) {
    if (ap->requires_grad) detail::add_reduced(*ap, self.grad);
    if (bp->requires_grad) {
      Tensor<T> gneg = Tensor<T>::uninit(self.grad.shape());
      const T* g = self.grad.data();
      for (int64_t i = 0; i < gneg.size(); ++i) gneg[i] = -g[i];
      if (bp->val.same_shape(gneg))
        bp->accum(std::move(gneg));
      else
        bp->accum(detail::reduce_to(gneg, bp->val.shape()));
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = detail::broadcast_zip(a->val, b->val, [](T u, T v) { return u * v; });
  Var<T> ap = a, bp = b;
  return detail::wrap<T>(std::move(y), {a, b}, [ap, bp](Node<T>& self) {
    if (ap->requires_grad) {
      Tensor<T> ga = detail::broadcast_zip(self.grad, bp->val, [](T g, T v) { return g * v; });
      if (ap->val.same_shape(ga))
        ap->accum(std::move(ga));
      else
        ap->accum(detail::reduce_to(ga, ap->val.shape()));
    }
    if (bp->requires_grad) {
      Tensor<T> gb = detail::broadcast_zip(self.grad, ap->val, [](T g, T v) { return g * v; });
      if (bp->val.same_shape(gb))
        bp->accum(std::move(gb));
      else
        bp->accum(detail::reduce_to(gb, bp->val.shape()));
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum_all(const Var<T>& x) {
  T acc = T(0);
  for (int64_t i = 0; i < x->val.size(); ++i) acc += x->val[i];
  Tensor<T> y({1});
  y[0] = acc;
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    T g = self.grad[0];
    Tensor<T>& gx = xp->g();
    for (int64_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
  if (x->val.size() == 0) throw ArgumentError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x->val.size()));
}

// Sum over the given dims, keeping them as size 1.
template <class T>
Var<T> sum_dims(const Var<T>& x, const std::vector<int>& dims) {
  Shape os = x->val.shape();
  for (int d : dims) os.at(static_cast<std::size_t>(d)) = 1;
  Tensor<T> y = detail::reduce_to(x->val, os);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    Tensor<T> gb = detail::broadcast_zip(xp->val, self.grad, [](T, T g) { return g; });
    xp->accum(std::move(gb));
  });
}

template <class T>
Var<T> mean_dims(const Var<T>& x, const std::vector<int>& dims) {
  int64_t cnt = 1;
  for (int d : dims) cnt *= x->val.dim(d);
  return scale(sum_dims(x, dims), 1.0 / static_cast<double>(cnt));
}

// ---------------------------------------------------------------------------
// Fused normalization core: x is viewed as `groups` contiguous blocks of
// equal size; each block is standardized to zero mean / unit variance
// (biased variance, eps inside the square root). Instance norm uses
// groups = N*C, layer norm uses groups = N.

template <class T>
Var<T> group_norm_core(const Var<T>& x, int64_t groups, double eps) {
  int64_t total = x->val.size();
  if (groups < 1 || total % groups) throw ArgumentError("group_norm_core: group count must divide the element count");
  int64_t m = total / groups;
  if (m < 1) throw ArgumentError("group_norm_core: empty groups");

  Tensor<T> y = Tensor<T>::uninit(x->val.shape());
  Tensor<T> inv = Tensor<T>::uninit({groups});
  const T* px = x->val.data();
  T* py = y.data();
  T* pinv = inv.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (total > (1 << 15))
  for (int64_t g = 0; g < groups; ++g) {
    const T* xg = px + g * m;
    T* yg = py + g * m;
    T sum = T(0), sumsq = T(0);
    for (int64_t i = 0; i < m; ++i) {
      sum += xg[i];
      sumsq += xg[i] * xg[i];
    }
    T mu = sum / static_cast<T>(m);
    T var = sumsq / static_cast<T>(m) - mu * mu;
    if (var < T(0)) var = T(0);
    T iv = T(1) / std::sqrt(var + static_cast<T>(eps));
    pinv[g] = iv;
    for (int64_t i = 0; i < m; ++i) yg[i] = (xg[i] - mu) * iv;
  }

  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp, inv = std::move(inv), groups, m](Node<T>& self) {
    if (!xp->requires_grad) return;
    // dx = inv * (g - mean(g) - y * mean(g*y)) per group
    bool fresh = !xp->grad_ready;
    if (fresh) {
      xp->grad = Tensor<T>::uninit(xp->val.shape());
      xp->grad_ready = true;
    }
    T* pdx = xp->grad.data();
    const T* pg = self.grad.data();
    const T* py2 = self.val.data();
    const T* pinv2 = inv.data();
#pragma omp parallel for schedule(static) num_threads(kern::threads()) if (groups * m > (1 << 15))
    for (int64_t g = 0; g < groups; ++g) {
      const T* gg = pg + g * m;
      const T* yg = py2 + g * m;
      T* dxg = pdx + g * m;
      T s1 = T(0), s2 = T(0);
      for (int64_t i = 0; i < m; ++i) {
        s1 += gg[i];
        s2 += gg[i] * yg[i];
      }
      T mg = s1 / static_cast<T>(m);
      T mgy = s2 / static_cast<T>(m);
      T iv = pinv2[g];
      if (fresh)
        for (int64_t i = 0; i < m; ++i) dxg[i] = iv * (gg[i] - mg - yg[i] * mgy);
      else
        for (int64_t i = 0; i < m; ++i) dxg[i] += iv * (gg[i] - mg - yg[i] * mgy);
    }
  });
}

// ---------------------------------------------------------------------------
// Shape ops

template <class T>
Var<T> reshape(const Var<T>& x, Shape s) {
  Tensor<T> y = x->val.reshaped(s);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    xp->accum(self.grad.reshaped(xp->val.shape()));
  });
}

template <class T>
Var<T> detach(const Var<T>& x) {
  return constant(x->val);
}

template <class T>
Var<T> concat_ch(const Var<T>& a, const Var<T>& b) {
  const auto &sa = a->val.shape(), &sb = b->val.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw ArgumentError("concat_ch: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
  Tensor<T> y = Tensor<T>::uninit({sa[0], sa[1] + sb[1], sa[2], sa[3]});
  int64_t hw = sa[2] * sa[3];
  for (int64_t n = 0; n < sa[0]; ++n) {
    std::copy_n(a->val.data() + n * sa[1] * hw, sa[1] * hw, y.data() + n * (sa[1] + sb[1]) * hw);
    std::copy_n(b->val.data() + n * sb[1] * hw, sb[1] * hw, y.data() + (n * (sa[1] + sb[1]) + sa[1]) * hw);
  }
  Var<T> ap = a, bp = b;
  return detail::wrap<T>(std::move(y), {a, b}, [ap, bp, hw](Node<T>& self) {
    int64_t ca = ap->val.dim(1), cb = bp->val.dim(1);
    for (auto [node, off, ch] : {std::tuple{ap.get(), int64_t(0), ca}, std::tuple{bp.get(), ca, cb}}) {
      if (!node->requires_grad) continue;
      Tensor<T>& gx = node->g();
      for (int64_t n = 0; n < self.val.dim(0); ++n) {
        const T* g = self.grad.data() + (n * (ca + cb) + off) * hw;
        T* dst = gx.data() + n * ch * hw;
        for (int64_t i = 0; i < ch * hw; ++i) dst[i] += g[i];
      }
    }
  });
}

template <class T>
Var<T> narrow_ch(const Var<T>& x, int64_t start, int64_t len) {
  const auto& s = x->val.shape();
  if (s.size() != 4 || start < 0 || start + len > s[1]) throw ArgumentError("narrow_ch: bad channel range");
  Tensor<T> y = Tensor<T>::uninit({s[0], len, s[2], s[3]});
  int64_t hw = s[2] * s[3];
  for (int64_t n = 0; n < s[0]; ++n)
    std::copy_n(x->val.data() + (n * s[1] + start) * hw, len * hw, y.data() + n * len * hw);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp, start, len, hw](Node<T>& self) {
    if (!xp->requires_grad) return;
    int64_t c = xp->val.dim(1);
    T* gx = xp->g().data();
    for (int64_t n = 0; n < self.val.dim(0); ++n) {
      const T* g = self.grad.data() + n * len * hw;
      T* dst = gx + (n * c + start) * hw;
      for (int64_t i = 0; i < len * hw; ++i) dst[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Neural-net ops

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad) {
  kern::ConvShape cs = kern::ConvShape::make(x->val.shape(), w->val.shape(), stride, pad);
  if (b && (b->val.ndim() != 1 || b->val.dim(0) != cs.cout)) throw ArgumentError("conv2d: bias shape mismatch");
  Tensor<T> y;
  kern::conv2d_fwd(x->val, w->val, b ? b->val.data() : nullptr, stride, pad, y);
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  Var<T> xp = x, wp = w, bp = b;
  return detail::wrap<T>(std::move(y), std::move(parents), [xp, wp, bp, cs](Node<T>& self) {
    if (xp->requires_grad) {
      Tensor<T> dx;
      kern::conv2d_bwd_data(self.grad, wp->val, cs, dx);
      xp->accum(std::move(dx));
    }
    if (wp->requires_grad) {
      Tensor<T> dw, db;
      kern::conv2d_bwd_weight(xp->val, self.grad, cs, dw, bp && bp->requires_grad ? &db : nullptr);
      wp->accum(std::move(dw));
      if (bp && bp->requires_grad) bp->accum(std::move(db));
    } else if (bp && bp->requires_grad) {
      Tensor<T> db({cs.cout});
      for (int64_t n = 0; n < cs.n; ++n)
        for (int64_t co = 0; co < cs.cout; ++co) {
          const T* row = self.grad.data() + (n * cs.cout + co) * cs.ho * cs.wo;
          for (int64_t p = 0; p < cs.ho * cs.wo; ++p) db[co] += row[p];
        }
      bp->accum(std::move(db));
    }
  });
}

// x: (N, In), w: (Out, In), b: (Out) -> (N, Out)
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  if (x->val.ndim() != 2 || w->val.ndim() != 2 || x->val.dim(1) != w->val.dim(1))
    throw ArgumentError("linear: shape mismatch " + shape_str(x->val.shape()) + " vs " + shape_str(w->val.shape()));
  int64_t n = x->val.dim(0), in = x->val.dim(1), out = w->val.dim(0);
  if (b && (b->val.ndim() != 1 || b->val.dim(0) != out)) throw ArgumentError("linear: bias shape mismatch");
  Tensor<T> y = Tensor<T>::uninit({n, out});
  kern::gemm(kern::Trans::N, kern::Trans::T, n, out, in, x->val.data(), w->val.data(), y.data(), false);
  if (b)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < out; ++j) y[i * out + j] += b->val[j];
  std::vector<Var<T>> parents = b ? std::vector<Var<T>>{x, w, b} : std::vector<Var<T>>{x, w};
  Var<T> xp = x, wp = w, bp = b;
  return detail::wrap<T>(std::move(y), std::move(parents), [xp, wp, bp, n, in, out](Node<T>& self) {
    if (xp->requires_grad) {
      Tensor<T> dx = Tensor<T>::uninit({n, in});
      kern::gemm(kern::Trans::N, kern::Trans::N, n, in, out, self.grad.data(), wp->val.data(), dx.data(), false);
      xp->accum(std::move(dx));
    }
    if (wp->requires_grad) {
      Tensor<T> dw = Tensor<T>::uninit({out, in});
      kern::gemm(kern::Trans::T, kern::Trans::N, out, in, n, self.grad.data(), xp->val.data(), dw.data(), false);
      wp->accum(std::move(dw));
    }
    if (bp && bp->requires_grad) {
      Tensor<T> db({out});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out; ++j) db[j] += self.grad[i * out + j];
      bp->accum(std::move(db));
    }
  });
}

template <class T>
Var<T> pad_reflect(const Var<T>& x, int64_t p) {
  if (p == 0) return x;
  Tensor<T> y;
  kern::pad_reflect_fwd(x->val, p, y);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp, p](Node<T>& self) {
    if (!xp->requires_grad) return;
    Tensor<T> dx;
    kern::pad_reflect_bwd(self.grad, p, xp->val.shape(), dx);
    xp->accum(std::move(dx));
  });
}

template <class T>
Var<T> upsample_nearest2(const Var<T>& x) {
  Tensor<T> y;
  kern::upsample2_fwd(x->val, y);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    Tensor<T> dx;
    kern::upsample2_bwd(self.grad, dx);
    xp->accum(std::move(dx));
  });
}

template <class T>
Var<T> avg_pool3s2(const Var<T>& x) {
  Tensor<T> y;
  kern::avgpool3s2_fwd(x->val, y);
  Var<T> xp = x;
  return detail::wrap<T>(std::move(y), {x}, [xp](Node<T>& self) {
    if (!xp->requires_grad) return;
    Tensor<T> dx;
    kern::avgpool3s2_bwd(self.grad, xp->val.shape(), dx);
    xp->accum(std::move(dx));
  });
}

}  // namespace acl::ad
