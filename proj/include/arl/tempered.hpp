#pragma once

// Tempered logarithm/exponential and the tempered softmax used by the
// bi-tempered loss.

#include "arl/errors.hpp"
#include "arl/numeric.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace arl {

inline constexpr double kTemperatureSingularity = 1e-8;

// Tempered log without domain checks; valid for x > 0.
template <typename Scalar>
Scalar log_t_unchecked(Scalar x, Scalar t) {
  using std::abs;
  using std::expm1;
  using std::log;
  const Scalar one_minus_t = Scalar(1) - t;
  if (abs(one_minus_t) < Scalar(kTemperatureSingularity)) return log(x);
  return expm1(one_minus_t * log(x)) / one_minus_t;
}

/// (x^(1-t) - 1) / (1 - t), reducing to ln x as t -> 1.
template <typename Scalar>
Scalar log_t(Scalar x, Scalar t) {
  if (!(x > Scalar(0))) {
    throw DomainError("log_t: argument must be positive");
  }
  return log_t_unchecked(x, t);
}

/// [1 + (1-t) x]_+^(1/(1-t)), reducing to e^x as t -> 1.
///
/// For t > 1 the base can reach zero from above when x >= 1/(t-1); the
/// result is then +infinity. The tempered softmax never evaluates there
/// because all of its arguments are nonpositive.
template <typename Scalar>
Scalar exp_t(Scalar x, Scalar t) {
  using std::abs;
  using std::exp;
  using std::log1p;
  const Scalar one_minus_t = Scalar(1) - t;
  if (abs(one_minus_t) < Scalar(kTemperatureSingularity)) return exp(x);
  const Scalar base = Scalar(1) + one_minus_t * x;
  if (base <= Scalar(0)) {
    return one_minus_t > Scalar(0) ? Scalar(0) : std::numeric_limits<Scalar>::infinity();
  }
  return exp(log1p(one_minus_t * x) / one_minus_t);
}

template <typename Scalar>
struct TemperedSoftmax {
  Vec<Scalar> probs;
  Scalar normalizer;  // gamma such that sum_j exp_t(z_j - gamma) = 1
  int iterations;
};

struct TemperedSolverOptions {
  double tolerance = 1e-12;
  int max_iterations = 200;
  double initial_width = 1.0;
};

/// Tempered softmax p_j = exp_t(z_j - gamma) with gamma found by bisection.
///
/// gamma -> sum_j exp_t(z_j - gamma) is strictly decreasing on
/// [max z, inf) and equals >= 1 at max z, so a bracket is grown by doubling
/// its width until the sum falls below one and then bisected.
template <typename Scalar>
TemperedSoftmax<Scalar> tempered_softmax(const Eigen::Ref<const Vec<Scalar>>& z, Scalar t,
                                         const TemperedSolverOptions& options = {}) {
  if (!(t > Scalar(1))) throw DomainError("tempered_softmax: temperature must exceed 1");
  if (z.size() == 0) throw ShapeError("tempered_softmax: empty logits");
  if (!z.allFinite()) throw DomainError("tempered_softmax: non-finite logits");

  auto mass = [&](Scalar gamma) {
    Scalar s(0);
    for (Eigen::Index j = 0; j < z.size(); ++j) s += exp_t<Scalar>(z[j] - gamma, t);
    return s;
  };

  const Scalar top = z.maxCoeff();
  Scalar lo = top;
  Scalar width = Scalar(options.initial_width);
  Scalar hi = top + width;
  int iterations = 0;
  while (mass(hi) >= Scalar(1)) {
    lo = hi;
    width *= Scalar(2);
    hi = top + width;
    if (++iterations > options.max_iterations) {
      std::ostringstream msg;
      msg << "tempered_softmax: bracket search failed (t=" << t << ", width=" << width << ")";
      throw NumericError(msg.str());
    }
  }
  while (hi - lo > Scalar(options.tolerance)) {
    const Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mid <= lo || mid >= hi) break;
    if (mass(mid) >= Scalar(1)) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (++iterations > options.max_iterations) {
      std::ostringstream msg;
      msg << "tempered_softmax: bisection did not converge (t=" << t << ", bracket=[" << lo << ", "
          << hi << "])";
      throw NumericError(msg.str());
    }
  }
  const Scalar gamma = lo + (hi - lo) / Scalar(2);
  Vec<Scalar> p(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) p[j] = exp_t<Scalar>(z[j] - gamma, t);
  return {std::move(p), gamma, iterations};
}

}  // namespace arl
