#pragma once

// Training objectives in their least-squares form. Score-map reductions are
// means over pixels, averaged over scales and over parallel fake lists, so
// the magnitudes are independent of resolution and scale count.
//
// All functions return scalar graph nodes; every value is nonnegative by
// construction (sums of squares, absolute values, positive reciprocals).

#include <cmath>
#include <string>
#include <vector>

#include "acl/autodiff.hpp"
#include "acl/hparams.hpp"

namespace acl::gan {

using ad::Var;

// One logged row of training losses. `total` always satisfies
// total = (adv_t + adv_s) + lambda_acl*acl + lambda_idt*idt + lambda_mask*mask
// with the effective (ablation-aware) weights; disabled components are 0.
struct LossReport {
  std::int64_t iteration = 0;
  double adv_t = 0, adv_s = 0, acl = 0, idt = 0, mask = 0, total = 0;
  double lr = 0;

  std::string to_json_line() const {
    char buf[320];
    std::snprintf(buf, sizeof(buf),
                  "{\"iter\":%lld,\"adv_T\":%.10g,\"adv_S\":%.10g,\"acl\":%.10g,\"idt\":%.10g,"
                  "\"mask\":%.10g,\"total\":%.10g,\"lr\":%.10g}",
                  static_cast<long long>(iteration), adv_t, adv_s, acl, idt, mask, total, lr);
    return buf;
  }
};

namespace detail {

// Mean over pixels of (map - target)^2, averaged over scales.
template <class T>
Var<T> msq_to(const std::vector<Var<T>>& maps, double target) {
  if (maps.empty()) throw ArgumentError("lsgan: empty score-map list");
  Var<T> acc;
  for (const auto& m : maps) {
    Var<T> term = ad::mean_all(ad::square(ad::affine(m, 1.0, -target)));
    acc = acc ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, 1.0 / static_cast<double>(maps.size()));
}

template <class T>
Var<T> average(const std::vector<Var<T>>& terms) {
  Var<T> acc;
  for (const auto& t : terms) acc = acc ? ad::add(acc, t) : t;
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace detail

// Discriminator side: (real-1)^2 plus the average over fake lists of fake^2.
template <class T>
Var<T> lsgan_d(const std::vector<Var<T>>& real_maps, const std::vector<std::vector<Var<T>>>& fake_map_lists) {
  if (real_maps.empty() || fake_map_lists.empty()) throw ArgumentError("lsgan_d: empty inputs");
  std::vector<Var<T>> fakes;
  for (const auto& list : fake_map_lists) fakes.push_back(detail::msq_to(list, 0.0));
  return ad::add(detail::msq_to(real_maps, 1.0), detail::average(fakes));
}

// Generator side: average over lists of (fake-1)^2.
template <class T>
Var<T> lsgan_g(const std::vector<std::vector<Var<T>>>& fake_map_lists) {
  if (fake_map_lists.empty()) throw ArgumentError("lsgan_g: empty input");
  std::vector<Var<T>> terms;
  for (const auto& list : fake_map_lists) terms.push_back(detail::msq_to(list, 1.0));
  return detail::average(terms);
}

namespace detail {
template <class T>
void check_triple(const Var<T>& x_s, const Var<T>& x_hat_s, const Var<T>& x_tilde_s) {
  if (!x_s->val.same_shape(x_hat_s->val) || !x_s->val.same_shape(x_tilde_s->val))
    throw ArgumentError("acl loss: image shapes differ");
}
}  // namespace detail

// Consistency-discriminator objective over image pairs sharing x_s. The
// default labels mark (x_s, x_hat_s) real and (x_s, x_tilde_s) fake;
// swap_labels inverts them (the assignment is arbitrary).
template <class T, class DhatFn>
Var<T> acl_d(DhatFn&& dhat, const Var<T>& x_s, const Var<T>& x_hat_s, const Var<T>& x_tilde_s,
             bool swap_labels = false) {
  detail::check_triple(x_s, x_hat_s, x_tilde_s);
  std::vector<Var<T>> hat = dhat(x_s, x_hat_s);
  std::vector<Var<T>> tilde = dhat(x_s, x_tilde_s);
  const auto& real = swap_labels ? tilde : hat;
  const auto& fake = swap_labels ? hat : tilde;
  return ad::add(detail::msq_to(real, 1.0), detail::msq_to(fake, 0.0));
}

// Generator side pushes both joint distributions toward each other: each
// pair is scored against the opposite label.
template <class T, class DhatFn>
Var<T> acl_g(DhatFn&& dhat, const Var<T>& x_s, const Var<T>& x_hat_s, const Var<T>& x_tilde_s,
             bool swap_labels = false) {
  detail::check_triple(x_s, x_hat_s, x_tilde_s);
  std::vector<Var<T>> hat = dhat(x_s, x_hat_s);
  std::vector<Var<T>> tilde = dhat(x_s, x_tilde_s);
  const auto& to_zero = swap_labels ? tilde : hat;
  const auto& to_one = swap_labels ? hat : tilde;
  return ad::add(detail::msq_to(to_zero, 0.0), detail::msq_to(to_one, 1.0));
}

// L1 reconstruction of both identity paths, mean over pixels and channels.
template <class T>
Var<T> identity_loss(const Var<T>& x_s, const Var<T>& x_idt_s, const Var<T>& x_t, const Var<T>& x_idt_t) {
  if (!x_s->val.same_shape(x_idt_s->val) || !x_t->val.same_shape(x_idt_t->val))
    throw ArgumentError("identity_loss: shape mismatch");
  return ad::add(ad::mean_all(ad::abs(ad::sub(x_s, x_idt_s))), ad::mean_all(ad::abs(ad::sub(x_t, x_idt_t))));
}

// Bounded-focus-mask constraint. Per mask of W pixels:
//   delta * [ max(sum - delta_max*W, 0)^2 + max(delta_min*W - sum, 0)^2 ]
//   + sum_k 1 / (|m_k - 0.5| + eps)
// the whole sum divided by W, averaged over batch entries and over all
// masks produced in the step.
template <class T>
Var<T> mask_loss(const std::vector<Var<T>>& masks, const Hyperparameters& h) {
  if (!(h.epsilon > 0)) throw ConfigError("epsilon", "must be positive (guards the binarisation term)");
  if (masks.empty()) throw ArgumentError("mask_loss: no masks given");
  std::vector<Var<T>> per_mask;
  for (const auto& m : masks) {
    if (m->val.ndim() != 4 || m->val.dim(1) != 1)
      throw ArgumentError("mask_loss: masks must be (N,1,H,W), got " + shape_str(m->val.shape()));
    double W = static_cast<double>(m->val.dim(2) * m->val.dim(3));
    Var<T> sum = ad::sum_dims(m, {1, 2, 3});  // (N,1,1,1)
    Var<T> over = ad::relu(ad::affine(sum, 1.0, -h.delta_max * W));
    Var<T> under = ad::relu(ad::affine(sum, -1.0, h.delta_min * W));
    Var<T> hinge = ad::scale(ad::add(ad::square(over), ad::square(under)), h.delta);
    Var<T> binar = ad::sum_dims(ad::recip(ad::affine(ad::abs(ad::affine(m, 1.0, -0.5)), 1.0, h.epsilon)), {1, 2, 3});
    per_mask.push_back(ad::mean_all(ad::scale(ad::add(hinge, binar), 1.0 / W)));
  }
  return detail::average(per_mask);
}

template <class T>
struct TotalLoss {
  Var<T> value;  // scalar graph node for backward()
  LossReport report;
};

// Combines the generator-side components with the effective weights.
// Disabled components may be passed as null Vars and contribute exactly 0.
template <class T>
TotalLoss<T> total_generator_loss(const Var<T>& adv_t, const Var<T>& adv_s, const Var<T>& acl, const Var<T>& idt,
                                  const Var<T>& mask, const Hyperparameters& h) {
  auto component = [](const char* name, const Var<T>& v) -> double {
    if (!v) return 0.0;
    double x = static_cast<double>(v->val[0]);
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite loss component: ") + name);
    return x;
  };
  TotalLoss<T> out;
  out.report.adv_t = component("adv_T", adv_t);
  out.report.adv_s = component("adv_S", adv_s);
  out.report.acl = h.disable_acl ? 0.0 : component("acl", acl);
  out.report.idt = h.disable_idt ? 0.0 : component("idt", idt);
  out.report.mask = h.mask_enabled() ? component("mask", mask) : 0.0;
  out.report.total = out.report.adv_t + out.report.adv_s + h.eff_lambda_acl() * out.report.acl +
                     h.eff_lambda_idt() * out.report.idt + h.eff_lambda_mask() * out.report.mask;

  Var<T> total;
  auto accumulate = [&total](Var<T> term) { total = total ? ad::add(total, term) : term; };
  if (adv_t) accumulate(adv_t);
  if (adv_s) accumulate(adv_s);
  if (acl && !h.disable_acl && h.eff_lambda_acl() != 0.0) accumulate(ad::scale(acl, h.eff_lambda_acl()));
  if (idt && !h.disable_idt && h.eff_lambda_idt() != 0.0) accumulate(ad::scale(idt, h.eff_lambda_idt()));
  if (mask && h.mask_enabled() && h.eff_lambda_mask() != 0.0) accumulate(ad::scale(mask, h.eff_lambda_mask()));
  if (!total) total = ad::constant(Tensor<T>({1}));
  out.value = total;
  return out;
}

}  // namespace acl::gan
