#pragma once

#include "arl/numeric.hpp"

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace arl {

enum class LossVariant { kCe, kGce, kSl, kBiTempered, kPolySoft };

std::string_view to_string(LossVariant variant);
LossVariant parse_loss_variant(std::string_view name);

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kQFloor = 1e-3;            // q stays in [kQFloor, 1)
inline constexpr double kTemperatureMargin = 1e-3;  // t1 stays in [0, 1 - margin)
inline constexpr double kDefaultRceA = -4.0;

/// Loss hyperparameter set. Only the fields of the active variant are read.
struct HyperParams {
  LossVariant variant = LossVariant::kCe;
  double q = 0.3;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double t1 = 0.5;
  double t2 = 1.5;
  double lambda = std::log(10.0);
  double d = 3.0;
  double rce_A = kDefaultRceA;

  /// Mid-domain starting point for a c-class problem.
  static HyperParams defaults(LossVariant variant, int num_classes);

  /// Throws DomainError naming the first field outside its domain.
  void validate() const;

  /// Number of learnable hyperparameters of the active variant.
  int num_active() const;
  /// Active values in canonical order: q | gamma1,gamma2 | t1,t2 | lambda,d.
  VectorXd active_values() const;
  HyperParams with_active_values(const VectorXd& values) const;
  std::vector<std::string> active_names() const;
};

/// Unconstrained coordinates of the active hyperparameters.
struct UnconstrainedHyper {
  VectorXd theta;
};

UnconstrainedHyper to_unconstrained(const HyperParams& h);

/// Maps theta back onto the variant and fixed fields of `base`.
HyperParams from_unconstrained(const UnconstrainedHyper& u, const HyperParams& base);

/// d(active value)/d(theta), elementwise, evaluated at u.
VectorXd unconstrained_jacobian(const UnconstrainedHyper& u, const HyperParams& base);

}  // namespace arl
