#pragma once

// Robust classification losses with gradients w.r.t. logits and w.r.t. their
// hyperparameters. Probability-based losses assume the probabilities came
// from the standard softmax; their grad_logits is composed through it.

#include "arl/errors.hpp"
#include "arl/hyper.hpp"
#include "arl/numeric.hpp"
#include "arl/tempered.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace arl {

template <typename Scalar>
struct LossEval {
  Scalar value{0};
  Vec<Scalar> grad_logits;
  Vec<Scalar> grad_hyper;
};

namespace detail {

template <typename Scalar>
void check_label(Eigen::Index size, int label) {
  if (label < 0 || label >= size) {
    throw DomainError("label " + std::to_string(label) + " outside [0, " + std::to_string(size) +
                      ")");
  }
}

template <typename Scalar>
void check_probs(const Eigen::Ref<const Vec<Scalar>>& p, int label) {
  using std::abs;
  if (p.size() < 2) throw ShapeError("probabilities need at least two classes");
  if (!p.allFinite()) throw DomainError("non-finite probabilities");
  if (p.minCoeff() < Scalar(0) || abs(p.sum() - Scalar(1)) > Scalar(1e-10)) {
    throw DomainError("probabilities must be nonnegative and sum to one");
  }
  check_label<Scalar>(p.size(), label);
}

template <typename Scalar>
Scalar clamp_prob(Scalar p) {
  return std::clamp(p, Scalar(kProbabilityFloor), Scalar(1) - Scalar(kProbabilityFloor));
}

// p - e_label
template <typename Scalar>
Vec<Scalar> softmax_residual(const Eigen::Ref<const Vec<Scalar>>& p, int label) {
  Vec<Scalar> r = p;
  r[label] -= Scalar(1);
  return r;
}

template <typename Scalar>
Scalar bi_tempered_value(const Eigen::Ref<const Vec<Scalar>>& p, int label, Scalar t1) {
  using std::pow;
  const Scalar two_minus_t1 = Scalar(2) - t1;
  Scalar power_sum(0);
  for (Eigen::Index j = 0; j < p.size(); ++j) power_sum += pow(p[j], two_minus_t1);
  return -log_t_unchecked(clamp_prob(p[label]), t1) -
         (Scalar(1) - power_sum) / two_minus_t1;
}

template <typename Scalar>
Scalar bi_tempered_value_at(const Eigen::Ref<const Vec<Scalar>>& z, int label, Scalar t1,
                            Scalar t2) {
  return bi_tempered_value<Scalar>(tempered_softmax<Scalar>(z, t2).probs, label, t1);
}

}  // namespace detail

/// Cross entropy -log p_label.
template <typename Scalar>
LossEval<Scalar> ce(const Eigen::Ref<const Vec<Scalar>>& probs, int label) {
  using std::log;
  detail::check_probs<Scalar>(probs, label);
  return {-log(detail::clamp_prob(probs[label])), detail::softmax_residual<Scalar>(probs, label),
          Vec<Scalar>(0)};
}

/// Generalized cross entropy (1 - p^q) / q; grad_hyper = (d/dq).
template <typename Scalar>
LossEval<Scalar> gce(const Eigen::Ref<const Vec<Scalar>>& probs, int label, Scalar q) {
  using std::log;
  using std::pow;
  if (!(q > Scalar(0) && q <= Scalar(1))) throw DomainError("gce: q must lie in (0, 1]");
  detail::check_probs<Scalar>(probs, label);
  const Scalar p = detail::clamp_prob(probs[label]);
  const Scalar pq = pow(p, q);
  LossEval<Scalar> out;
  out.value = (Scalar(1) - pq) / q;
  out.grad_logits = pq * detail::softmax_residual<Scalar>(probs, label);
  out.grad_hyper = Vec<Scalar>::Constant(1, -pq * log(p) / q - (Scalar(1) - pq) / (q * q));
  return out;
}

/// Reverse cross entropy -A * sum_{j != label} p_j with A < 0.
template <typename Scalar>
LossEval<Scalar> rce(const Eigen::Ref<const Vec<Scalar>>& probs, int label, Scalar rce_A) {
  if (!(rce_A < Scalar(0))) throw DomainError("rce: constant A must be negative");
  detail::check_probs<Scalar>(probs, label);
  const Scalar off_mass = probs.sum() - probs[label];
  LossEval<Scalar> out;
  out.value = -rce_A * off_mass;
  // d(1 - p_y)/dz = -p_y (e_y - p) = p_y (p - e_y)
  out.grad_logits = -rce_A * probs[label] * detail::softmax_residual<Scalar>(probs, label);
  out.grad_hyper = Vec<Scalar>(0);
  return out;
}

/// Symmetric cross entropy gamma1 * CE + gamma2 * RCE; grad_hyper = (CE, RCE).
template <typename Scalar>
LossEval<Scalar> sl(const Eigen::Ref<const Vec<Scalar>>& probs, int label, Scalar gamma1,
                    Scalar gamma2, Scalar rce_A = Scalar(kDefaultRceA)) {
  if (!(gamma1 >= Scalar(0)) || !(gamma2 >= Scalar(0))) {
    throw DomainError("sl: gamma1 and gamma2 must be nonnegative");
  }
  const auto c = ce<Scalar>(probs, label);
  const auto r = rce<Scalar>(probs, label, rce_A);
  LossEval<Scalar> out;
  out.value = gamma1 * c.value + gamma2 * r.value;
  out.grad_logits = gamma1 * c.grad_logits + gamma2 * r.grad_logits;
  out.grad_hyper = (Vec<Scalar>(2) << c.value, r.value).finished();
  return out;
}

inline constexpr double kBiTemperedHyperStep = 1e-4;

/// Bi-tempered logistic loss on logits.
///
/// grad_logits differentiates through the implicit normalizer: with
/// s_j = p_j^t2 one has dp_j/dz_k = s_j (delta_jk - s_k / sum(s)).
/// grad_hyper = (d/dt1, d/dt2) by central differences.
template <typename Scalar>
LossEval<Scalar> bi_tempered(const Eigen::Ref<const Vec<Scalar>>& logits, int label, Scalar t1,
                             Scalar t2) {
  using std::pow;
  if (!(t1 >= Scalar(0) && t1 < Scalar(1))) throw DomainError("bi_tempered: t1 must lie in [0, 1)");
  if (!(t2 > Scalar(1))) throw DomainError("bi_tempered: t2 must exceed 1");
  if (!logits.allFinite()) throw DomainError("bi_tempered: non-finite logits");
  detail::check_label<Scalar>(logits.size(), label);

  const Vec<Scalar> p = tempered_softmax<Scalar>(logits, t2).probs;
  LossEval<Scalar> out;
  out.value = detail::bi_tempered_value<Scalar>(p, label, t1);

  Vec<Scalar> dl_dp(p.size());
  Vec<Scalar> s(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    dl_dp[j] = pow(p[j], Scalar(1) - t1);
    s[j] = pow(p[j], t2);
  }
  dl_dp[label] -= pow(detail::clamp_prob(p[label]), -t1);
  const Scalar mean_slope = dl_dp.dot(s) / s.sum();
  out.grad_logits = s.cwiseProduct((dl_dp.array() - mean_slope).matrix());

  const Scalar h(kBiTemperedHyperStep);
  const Scalar d_t1 = (detail::bi_tempered_value_at<Scalar>(logits, label, t1 + h, t2) -
                       detail::bi_tempered_value_at<Scalar>(logits, label, t1 - h, t2)) /
                      (Scalar(2) * h);
  Scalar d_t2;
  if (t2 - h > Scalar(1)) {
    d_t2 = (detail::bi_tempered_value_at<Scalar>(logits, label, t1, t2 + h) -
            detail::bi_tempered_value_at<Scalar>(logits, label, t1, t2 - h)) /
           (Scalar(2) * h);
  } else {
    d_t2 = (detail::bi_tempered_value_at<Scalar>(logits, label, t1, t2 + h) - out.value) / h;
  }
  out.grad_hyper = (Vec<Scalar>(2) << d_t1, d_t2).finished();
  return out;
}

/// Upper bound of the bi-tempered loss for c classes.
template <typename Scalar>
Scalar bi_tempered_upper_bound(int num_classes, Scalar t1) {
  using std::pow;
  return Scalar(1) / (Scalar(1) - t1) +
         (Scalar(1) - pow(Scalar(num_classes), t1 - Scalar(1))) / (Scalar(2) - t1);
}

namespace detail {
template <typename Scalar>
void check_polysoft(Scalar ce_value, Scalar lambda, Scalar d) {
  if (!(lambda > Scalar(0))) throw DomainError("polysoft: lambda must be positive");
  if (!(d > Scalar(1))) throw DomainError("polysoft: d must exceed 1");
  if (!(ce_value >= Scalar(0)) || !std::isfinite(static_cast<double>(ce_value))) {
    throw DomainError("polysoft: CE value must be finite and nonnegative");
  }
}
}  // namespace detail

/// Self-paced weight (1 - ce/lambda)^(1/(d-1)) below the threshold, 0 above.
/// This is the derivative of polysoft() w.r.t. the CE value.
template <typename Scalar>
Scalar polysoft_weight(Scalar ce_value, Scalar lambda, Scalar d) {
  using std::pow;
  detail::check_polysoft(ce_value, lambda, d);
  if (ce_value >= lambda) return Scalar(0);
  return pow(Scalar(1) - ce_value / lambda, Scalar(1) / (d - Scalar(1)));
}

/// Latent loss of polynomial soft weighting applied to a CE value.
/// grad_logits is left empty; grad_hyper = (d/dlambda, d/dd).
template <typename Scalar>
LossEval<Scalar> polysoft(Scalar ce_value, Scalar lambda, Scalar d) {
  using std::log;
  using std::pow;
  detail::check_polysoft(ce_value, lambda, d);
  const Scalar plateau = (d - Scalar(1)) * lambda / d;
  LossEval<Scalar> out;
  out.grad_logits = Vec<Scalar>(0);
  if (ce_value >= lambda) {
    out.value = plateau;
    out.grad_hyper = (Vec<Scalar>(2) << (d - Scalar(1)) / d, lambda / (d * d)).finished();
    return out;
  }
  const Scalar r = Scalar(1) - ce_value / lambda;
  const Scalar exponent = d / (d - Scalar(1));
  const Scalar r_pow = pow(r, exponent);
  const Scalar weight = pow(r, Scalar(1) / (d - Scalar(1)));
  out.value = plateau * (Scalar(1) - r_pow);
  const Scalar d_lambda = (d - Scalar(1)) / d * (Scalar(1) - r_pow) - weight * ce_value / lambda;
  const Scalar r_log_term = r > Scalar(0) ? r_pow * log(r) : Scalar(0);
  const Scalar d_d =
      lambda / (d * d) * (Scalar(1) - r_pow) + plateau * r_log_term / ((d - Scalar(1)) * (d - Scalar(1)));
  out.grad_hyper = (Vec<Scalar>(2) << d_lambda, d_d).finished();
  return out;
}

/// Loss of the configured variant evaluated on raw logits.
template <typename Scalar>
LossEval<Scalar> evaluate_loss(const HyperParams& h, const Eigen::Ref<const Vec<Scalar>>& logits,
                               int label) {
  if (!logits.allFinite()) throw DomainError("non-finite logits");
  detail::check_label<Scalar>(logits.size(), label);
  if (h.variant == LossVariant::kBiTempered) {
    return bi_tempered<Scalar>(logits, label, Scalar(h.t1), Scalar(h.t2));
  }
  const Vec<Scalar> p = softmax<Scalar>(logits);
  switch (h.variant) {
    case LossVariant::kCe:
      return ce<Scalar>(p, label);
    case LossVariant::kGce:
      return gce<Scalar>(p, label, Scalar(h.q));
    case LossVariant::kSl:
      return sl<Scalar>(p, label, Scalar(h.gamma1), Scalar(h.gamma2), Scalar(h.rce_A));
    case LossVariant::kPolySoft: {
      auto base = ce<Scalar>(p, label);
      auto out = polysoft<Scalar>(base.value, Scalar(h.lambda), Scalar(h.d));
      out.grad_logits =
          polysoft_weight<Scalar>(base.value, Scalar(h.lambda), Scalar(h.d)) * base.grad_logits;
      return out;
    }
    case LossVariant::kBiTempered:
      break;
  }
  throw ConfigError("unsupported loss variant");
}

}  // namespace arl
