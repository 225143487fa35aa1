#pragma once

// Layer primitives on top of the autodiff ops. Parameters are leaf Vars
// registered in a ParamStore so optimizers, checkpoints, and parameter
// counting all walk one flat named list.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "acl/autodiff.hpp"
#include "acl/rng.hpp"

namespace acl::nn {

using ad::Var;

template <class T>
class ParamStore {
 public:
  Var<T> add(const std::string& name, Tensor<T> init) {
    for (const auto& [n, v] : items_)
      if (n == name) throw ArgumentError("duplicate parameter name: " + name);
    items_.emplace_back(name, ad::leaf(std::move(init), true, name));
    return items_.back().second;
  }

  const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->val.size();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& [name, v] : items_) v->requires_grad = on;
  }

  void zero_grad() {
    for (auto& [name, v] : items_) v->zero_grad();
  }

  // FNV-1a over the raw value bytes; used by tests to assert weights did
  // not move.
  std::uint64_t checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, v] : items_) {
      const unsigned char* p = reinterpret_cast<const unsigned char*>(v->val.data());
      std::size_t bytes = static_cast<std::size_t>(v->val.size()) * sizeof(T);
      for (std::size_t i = 0; i < bytes; ++i) h = (h ^ p[i]) * 1099511628211ull;
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> items_;
};

template <class T>
Tensor<T> kaiming_conv(std::int64_t cout, std::int64_t cin, std::int64_t k, Rng& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
  return Tensor<T>::randn({cout, cin, k, k}, rng, stddev);
}

template <class T>
Tensor<T> kaiming_linear(std::int64_t out, std::int64_t in, Rng& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(in));
  return Tensor<T>::randn({out, in}, rng, stddev);
}

enum class Pad { Zero, Reflect };

// Activation selector for the conv stacks. Tanh exists mainly for
// gradient verification, where kink-free nets make finite differences
// clean; training uses the rectified defaults.
enum class Act { ReLU, LeakyReLU, Tanh };

template <class T>
Var<T> activate(const Var<T>& x, Act act) {
  switch (act) {
    case Act::ReLU: return ad::relu(x);
    case Act::LeakyReLU: return ad::leaky_relu(x, 0.2);
    default: return ad::tanh(x);
  }
}

template <class T>
struct Conv2d {
  Var<T> w, b;
  std::int64_t stride = 1, pad = 0;
  Pad pad_kind = Pad::Zero;

  static Conv2d make(ParamStore<T>& ps, const std::string& name, std::int64_t cin, std::int64_t cout, std::int64_t k,
                     std::int64_t stride, std::int64_t pad, Pad pad_kind, Rng& rng) {
    Conv2d c;
    c.w = ps.add(name + ".w", kaiming_conv<T>(cout, cin, k, rng));
    c.b = ps.add(name + ".b", Tensor<T>({cout}));
    c.stride = stride;
    c.pad = pad;
    c.pad_kind = pad_kind;
    return c;
  }

  Var<T> operator()(Var<T> x) const {
    if (pad_kind == Pad::Reflect && pad > 0) return ad::conv2d(ad::pad_reflect(x, pad), w, b, stride, 0);
    return ad::conv2d(x, w, b, stride, pad);
  }
};

template <class T>
struct Linear {
  Var<T> w, b;

  static Linear make(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng) {
    Linear l;
    l.w = ps.add(name + ".w", kaiming_linear<T>(out, in, rng));
    l.b = ps.add(name + ".b", Tensor<T>({out}));
    return l;
  }

  Var<T> operator()(Var<T> x) const { return ad::linear(x, w, b); }
};

// Per-(sample, channel) normalization without affine terms.
template <class T>
Var<T> instance_normalize(const Var<T>& x, double eps = 1e-5) {
  if (x->val.ndim() != 4) throw ArgumentError("instance_normalize: expected NCHW");
  return ad::group_norm_core(x, x->val.dim(0) * x->val.dim(1), eps);
}

template <class T>
struct InstanceNorm {
  Var<T> gamma, beta;
  double eps = 1e-5;

  static InstanceNorm make(ParamStore<T>& ps, const std::string& name, std::int64_t c) {
    InstanceNorm n;
    n.gamma = ps.add(name + ".g", Tensor<T>::full({1, c, 1, 1}, T(1)));
    n.beta = ps.add(name + ".b", Tensor<T>({1, c, 1, 1}));
    return n;
  }

  Var<T> operator()(Var<T> x) const { return ad::add(ad::mul(instance_normalize(x, eps), gamma), beta); }
};

// Per-sample normalization over (C,H,W) with per-channel affine.
template <class T>
struct LayerNorm {
  Var<T> gamma, beta;
  double eps = 1e-5;

  static LayerNorm make(ParamStore<T>& ps, const std::string& name, std::int64_t c) {
    LayerNorm n;
    n.gamma = ps.add(name + ".g", Tensor<T>::full({1, c, 1, 1}, T(1)));
    n.beta = ps.add(name + ".b", Tensor<T>({1, c, 1, 1}));
    return n;
  }

  Var<T> operator()(Var<T> x) const {
    auto xn = ad::group_norm_core(x, x->val.dim(0), eps);
    return ad::add(ad::mul(xn, gamma), beta);
  }
};

// Adaptive instance norm: statistics come from the content map, scale and
// bias come from the style path as (N, C) tensors.
template <class T>
Var<T> adain(const Var<T>& x, const Var<T>& scale_nc, const Var<T>& bias_nc, double eps = 1e-5) {
  std::int64_t n = x->val.dim(0), c = x->val.dim(1);
  auto s4 = ad::reshape(scale_nc, {n, c, 1, 1});
  auto b4 = ad::reshape(bias_nc, {n, c, 1, 1});
  return ad::add(ad::mul(instance_normalize(x, eps), s4), b4);
}

}  // namespace acl::nn
