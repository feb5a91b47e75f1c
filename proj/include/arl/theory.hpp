#pragma once

// Numeric verification of the risk-gap bounds for bounded robust losses under
// symmetric label noise, by exact minimization over a simplex grid.

#include "arl/hyper.hpp"
#include "arl/numeric.hpp"

#include <json.hpp>
#include <vector>

namespace arl {

struct BoundConstants {
  double A = 0.0;        // upper bound of the noisy-risk gap, >= 0
  double A_prime = 0.0;  // lower bound of the clean-risk gap, <= 0
  int num_classes = 0;
  double noise_rate = 0.0;
  HyperParams hyper;
};

/// Closed-form constants for PolySoft (requires lambda >= log c, d > 1) and
/// bi-tempered (requires 0 <= t1 < 1, t2 > 1); both need eta <= 1 - 1/c.
BoundConstants bound_constants(const HyperParams& h, int num_classes, double noise_rate);

struct FiniteWorld {
  std::vector<int> clean_labels;  // one per input point
  int num_classes = 0;
  double grid_step = 0.02;
  double noise_rate = 0.0;

  /// K points with round-robin clean labels.
  static FiniteWorld round_robin(int points, int num_classes, double grid_step, double noise_rate);
  int grid_resolution() const;  // 1 / grid_step, validated to be an integer
};

/// Every composition of the grid resolution into c parts, as probability rows.
MatrixXd simplex_grid(int num_classes, int resolution);
double simplex_grid_size(int num_classes, int resolution);

/// Loss of prediction u (a point of the simplex) against class `label`.
/// Bi-tempered treats u as the tempered-softmax output.
double simplex_loss(const HyperParams& h, const Eigen::Ref<const VectorXd>& u, int label);

/// Expected loss over the points; with `noisy` the label is the true one
/// w.p. 1 - eta and each other class w.p. eta / (c - 1).
double exact_risk(const FiniteWorld& world, const MatrixXd& assignment, const HyperParams& h,
                  bool noisy);

struct RiskReport {
  MatrixXd clean_minimizer;  // f*, one grid point per input
  MatrixXd noisy_minimizer;  // f-hat
  double clean_risk_fstar = 0.0;
  double clean_risk_fhat = 0.0;
  double noisy_risk_fstar = 0.0;
  double noisy_risk_fhat = 0.0;
  BoundConstants constants;
  double tol_grid = 0.0;
  double lipschitz = 0.0;
  double noisy_gap = 0.0;  // R^eta(f*) - R^eta(f-hat)
  double clean_gap = 0.0;  // R(f*) - R(f-hat)
  bool noisy_lower_ok = false;
  bool noisy_upper_ok = false;
  bool clean_lower_ok = false;
  bool clean_upper_ok = false;
  bool all_ok() const { return noisy_lower_ok && noisy_upper_ok && clean_lower_ok && clean_upper_ok; }
};

inline constexpr double kEnumerationBudget = 1e7;

/// Finds f* and f-hat by independent per-point grid scans (the risks are sums
/// over points) and checks both sandwich inequalities within tol_grid.
RiskReport riskgap_verify(const FiniteWorld& world, const HyperParams& h);

struct LossSumRange {
  double min = 0.0;
  double max = 0.0;
  double spread() const { return max - min; }
};

/// Range of sum_j L(u, j) over the simplex grid.
LossSumRange loss_sum_range(const HyperParams& h, int num_classes, int resolution);

/// Max |L(u', j) - L(u, j)| / step over adjacent grid points and all labels.
double grid_lipschitz(const HyperParams& h, int num_classes, int resolution);

nlohmann::json to_json(const RiskReport& report);

}  // namespace arl
