#pragma once

// Shared domain primitives: noise sampling and focus-mask compositing.
// Images are CHW (or NCHW batches) in [-1, 1]; masks are 1xHxW in [0, 1].

#include "acl/autodiff.hpp"
#include "acl/rng.hpp"
#include "acl/tensor.hpp"

namespace acl {

template <class T>
Tensor<T> sample_noise(std::int64_t count, std::int64_t d_z, Rng& rng) {
  if (count < 1) throw ArgumentError("sample_noise: count must be >= 1");
  if (d_z < 1) throw ArgumentError("sample_noise: d_z must be >= 1");
  return Tensor<T>::randn({count, d_z}, rng);
}

namespace detail {
template <class T>
void check_composite_shapes(const Tensor<T>& raw, const Tensor<T>& mask, const Tensor<T>& source) {
  if (!raw.same_shape(source))
    throw ArgumentError("composite_with_mask: raw " + shape_str(raw.shape()) + " vs source " +
                        shape_str(source.shape()));
  int spatial = raw.ndim();
  if ((spatial != 3 && spatial != 4) || mask.ndim() != spatial)
    throw ArgumentError("composite_with_mask: expected CHW or NCHW inputs");
  int c_axis = spatial == 4 ? 1 : 0;
  if (mask.dim(c_axis) != 1 || mask.dim(c_axis + 1) != raw.dim(c_axis + 1) ||
      mask.dim(c_axis + 2) != raw.dim(c_axis + 2) || (spatial == 4 && mask.dim(0) != raw.dim(0)))
    throw ArgumentError("composite_with_mask: mask " + shape_str(mask.shape()) + " does not match image " +
                        shape_str(raw.shape()));
}
}  // namespace detail

// out = raw .* mask + source .* (1 - mask), mask broadcast over channels.
template <class T>
Tensor<T> composite_with_mask(const Tensor<T>& raw, const Tensor<T>& mask, const Tensor<T>& source) {
  detail::check_composite_shapes(raw, mask, source);
  for (std::int64_t i = 0; i < mask.size(); ++i)
    if (mask[i] < T(0) || mask[i] > T(1)) throw ArgumentError("composite_with_mask: mask value outside [0,1]");
  Tensor<T> out(raw.shape());
  int c_axis = raw.ndim() == 4 ? 1 : 0;
  std::int64_t n = raw.ndim() == 4 ? raw.dim(0) : 1;
  std::int64_t c = raw.dim(c_axis);
  std::int64_t hw = raw.dim(c_axis + 1) * raw.dim(c_axis + 2);
  for (std::int64_t b = 0; b < n; ++b) {
    const T* m = mask.data() + b * hw;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* r = raw.data() + (b * c + ch) * hw;
      const T* s = source.data() + (b * c + ch) * hw;
      T* o = out.data() + (b * c + ch) * hw;
      for (std::int64_t i = 0; i < hw; ++i) o[i] = r[i] * m[i] + s[i] * (T(1) - m[i]);
    }
  }
  return out;
}

namespace ad {

// Autodiff form used inside the training graph.
template <class T>
Var<T> composite(const Var<T>& raw, const Var<T>& mask, const Var<T>& source) {
  acl::detail::check_composite_shapes(raw->val, mask->val, source->val);
  Var<T> inv = affine(mask, -1.0, 1.0);
  return add(mul(raw, mask), mul(source, inv));
}

}  // namespace ad
}  // namespace acl
