#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <functional>
#include <string>

namespace arl {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

// Inverse of softplus for v > 0.
template <typename Scalar>
Scalar softplus_inverse(Scalar v) {
  using std::exp;
  using std::expm1;
  using std::log;
  using std::log1p;
  return v > Scalar(20) ? v + log1p(-exp(-v)) : log(expm1(v));
}

// Inverse of sigmoid for u in (0, 1).
template <typename Scalar>
Scalar logit(Scalar u) {
  using std::log;
  using std::log1p;
  return log(u) - log1p(-u);
}

template <typename Scalar>
Vec<Scalar> softmax(const Eigen::Ref<const Vec<Scalar>>& z) {
  Vec<Scalar> e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

// Locale-independent decimal with `digits` significant digits.
inline std::string format_number(double value, int digits = 9) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

// Logs a warning to the installed sink (stderr by default).
void warn(const std::string& message);
void set_warning_sink(std::function<void(const std::string&)> sink);

}  // namespace arl
