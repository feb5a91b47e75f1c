#include "arl/hyper.hpp"

#include "arl/errors.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <sstream>

namespace arl {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

std::function<void(const std::string&)>& sink() {
  static std::function<void(const std::string&)> s = [](const std::string& message) {
    std::cerr << "warning: " << message << '\n';
  };
  return s;
}

// How each active slot maps between constrained and unconstrained space.
enum class Transform { kQ, kT1, kOnePlusSoftplus, kSoftplus };

std::vector<Transform> transforms_for(LossVariant variant) {
  switch (variant) {
    case LossVariant::kCe:
      return {};
    case LossVariant::kGce:
      return {Transform::kQ};
    case LossVariant::kSl:
      return {Transform::kSoftplus, Transform::kSoftplus};
    case LossVariant::kBiTempered:
      return {Transform::kT1, Transform::kOnePlusSoftplus};
    case LossVariant::kPolySoft:
      return {Transform::kSoftplus, Transform::kOnePlusSoftplus};
  }
  return {};
}

constexpr double kEdgeMargin = 1e-12;

double clamp_unit(double u, const char* name) {
  if (u < kEdgeMargin || u > 1.0 - kEdgeMargin) {
    warn(std::string("hyperparameter ") + name + " at its domain edge; clamped to the interior");
    return std::clamp(u, kEdgeMargin, 1.0 - kEdgeMargin);
  }
  return u;
}

double clamp_positive(double v, const char* name) {
  if (v < kEdgeMargin) {
    warn(std::string("hyperparameter ") + name + " at its domain edge; clamped to the interior");
    return kEdgeMargin;
  }
  return v;
}

double forward(Transform tr, double theta) {
  switch (tr) {
    case Transform::kQ:
      return kQFloor + (1.0 - kQFloor) * sigmoid(theta);
    case Transform::kT1:
      return (1.0 - kTemperatureMargin) * sigmoid(theta);
    case Transform::kOnePlusSoftplus:
      return 1.0 + softplus(theta);
    case Transform::kSoftplus:
      return softplus(theta);
  }
  return 0.0;
}

double derivative(Transform tr, double theta) {
  const double s = sigmoid(theta);
  switch (tr) {
    case Transform::kQ:
      return (1.0 - kQFloor) * s * (1.0 - s);
    case Transform::kT1:
      return (1.0 - kTemperatureMargin) * s * (1.0 - s);
    case Transform::kOnePlusSoftplus:
    case Transform::kSoftplus:
      return s;
  }
  return 0.0;
}

double inverse(Transform tr, double value, const char* name) {
  switch (tr) {
    case Transform::kQ:
      return logit(clamp_unit((value - kQFloor) / (1.0 - kQFloor), name));
    case Transform::kT1:
      return logit(clamp_unit(value / (1.0 - kTemperatureMargin), name));
    case Transform::kOnePlusSoftplus:
      return softplus_inverse(clamp_positive(value - 1.0, name));
    case Transform::kSoftplus:
      return softplus_inverse(clamp_positive(value, name));
  }
  return 0.0;
}

[[noreturn]] void domain_failure(const char* field, double value, const char* domain) {
  std::ostringstream msg;
  msg << "hyperparameter " << field << " = " << value << " outside " << domain;
  throw DomainError(msg.str());
}

}  // namespace

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

void set_warning_sink(std::function<void(const std::string&)> s) {
  std::lock_guard lock(sink_mutex());
  sink() = std::move(s);
}

std::string_view to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::kCe:
      return "ce";
    case LossVariant::kGce:
      return "gce";
    case LossVariant::kSl:
      return "sl";
    case LossVariant::kBiTempered:
      return "bi_tempered";
    case LossVariant::kPolySoft:
      return "polysoft";
  }
  return "?";
}

LossVariant parse_loss_variant(std::string_view name) {
  for (auto v : {LossVariant::kCe, LossVariant::kGce, LossVariant::kSl, LossVariant::kBiTempered,
                 LossVariant::kPolySoft}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown loss variant '" + std::string(name) + "'");
}

HyperParams HyperParams::defaults(LossVariant variant, int num_classes) {
  if (num_classes < 2) throw ConfigError("at least two classes are required");
  HyperParams h;
  h.variant = variant;
  h.q = 0.3;
  h.gamma1 = 1.0;
  h.gamma2 = 1.0;
  h.t1 = 0.5;
  h.t2 = 1.5;
  h.lambda = 2.0 * std::log(static_cast<double>(num_classes));
  h.d = 3.0;
  return h;
}

void HyperParams::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  switch (variant) {
    case LossVariant::kCe:
      break;
    case LossVariant::kGce:
      if (!finite(q) || q <= 0.0 || q > 1.0) domain_failure("q", q, "(0, 1]");
      break;
    case LossVariant::kSl:
      if (!finite(gamma1) || gamma1 < 0.0) domain_failure("gamma1", gamma1, "[0, inf)");
      if (!finite(gamma2) || gamma2 < 0.0) domain_failure("gamma2", gamma2, "[0, inf)");
      if (!finite(rce_A) || rce_A >= 0.0) domain_failure("rce_A", rce_A, "(-inf, 0)");
      break;
    case LossVariant::kBiTempered:
      if (!finite(t1) || t1 < 0.0 || t1 >= 1.0) domain_failure("t1", t1, "[0, 1)");
      if (!finite(t2) || t2 <= 1.0) domain_failure("t2", t2, "(1, inf)");
      break;
    case LossVariant::kPolySoft:
      if (!finite(lambda) || lambda <= 0.0) domain_failure("lambda", lambda, "(0, inf)");
      if (!finite(d) || d <= 1.0) domain_failure("d", d, "(1, inf)");
      break;
  }
}

int HyperParams::num_active() const { return static_cast<int>(transforms_for(variant).size()); }

VectorXd HyperParams::active_values() const {
  switch (variant) {
    case LossVariant::kCe:
      return VectorXd(0);
    case LossVariant::kGce:
      return VectorXd::Constant(1, q);
    case LossVariant::kSl:
      return (VectorXd(2) << gamma1, gamma2).finished();
    case LossVariant::kBiTempered:
      return (VectorXd(2) << t1, t2).finished();
    case LossVariant::kPolySoft:
      return (VectorXd(2) << lambda, d).finished();
  }
  return VectorXd(0);
}

HyperParams HyperParams::with_active_values(const VectorXd& values) const {
  if (values.size() != num_active()) throw ShapeError("hyperparameter vector has wrong length");
  HyperParams h = *this;
  switch (variant) {
    case LossVariant::kCe:
      break;
    case LossVariant::kGce:
      h.q = values[0];
      break;
    case LossVariant::kSl:
      h.gamma1 = values[0];
      h.gamma2 = values[1];
      break;
    case LossVariant::kBiTempered:
      h.t1 = values[0];
      h.t2 = values[1];
      break;
    case LossVariant::kPolySoft:
      h.lambda = values[0];
      h.d = values[1];
      break;
  }
  return h;
}

std::vector<std::string> HyperParams::active_names() const {
  switch (variant) {
    case LossVariant::kCe:
      return {};
    case LossVariant::kGce:
      return {"q"};
    case LossVariant::kSl:
      return {"gamma1", "gamma2"};
    case LossVariant::kBiTempered:
      return {"t1", "t2"};
    case LossVariant::kPolySoft:
      return {"lambda", "d"};
  }
  return {};
}

UnconstrainedHyper to_unconstrained(const HyperParams& h) {
  h.validate();
  const auto trs = transforms_for(h.variant);
  const auto names = h.active_names();
  const VectorXd values = h.active_values();
  UnconstrainedHyper u{VectorXd(values.size())};
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    u.theta[k] = inverse(trs[k], values[k], names[k].c_str());
  }
  return u;
}

HyperParams from_unconstrained(const UnconstrainedHyper& u, const HyperParams& base) {
  const auto trs = transforms_for(base.variant);
  if (u.theta.size() != static_cast<Eigen::Index>(trs.size())) {
    throw ShapeError("unconstrained vector does not match the loss variant");
  }
  if (!u.theta.allFinite()) throw NumericError("non-finite unconstrained hyperparameters");
  VectorXd values(u.theta.size());
  for (Eigen::Index k = 0; k < values.size(); ++k) values[k] = forward(trs[k], u.theta[k]);
  return base.with_active_values(values);
}

VectorXd unconstrained_jacobian(const UnconstrainedHyper& u, const HyperParams& base) {
  const auto trs = transforms_for(base.variant);
  if (u.theta.size() != static_cast<Eigen::Index>(trs.size())) {
    throw ShapeError("unconstrained vector does not match the loss variant");
  }
  VectorXd jac(u.theta.size());
  for (Eigen::Index k = 0; k < jac.size(); ++k) jac[k] = derivative(trs[k], u.theta[k]);
  return jac;
}

}  // namespace arl
