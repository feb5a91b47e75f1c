#pragma once

// Fully connected classifier: affine layers with tanh or ReLU between them
// and raw logits at the output. Samples are rows of the input matrix.

#include "arl/errors.hpp"
#include "arl/numeric.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace arl {

enum class Activation { kTanh, kRelu };

inline std::string_view to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

inline Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

/// Per-layer weight matrices (fan_in x fan_out) and bias vectors.
template <typename Scalar>
struct MlpParams {
  Activation activation = Activation::kTanh;
  std::vector<Mat<Scalar>> weights;
  std::vector<Vec<Scalar>> biases;

  std::vector<int> sizes() const {
    std::vector<int> s;
    if (weights.empty()) return s;
    s.push_back(static_cast<int>(weights.front().rows()));
    for (const auto& w : weights) s.push_back(static_cast<int>(w.cols()));
    return s;
  }
  int input_dim() const { return static_cast<int>(weights.front().rows()); }
  int num_classes() const { return static_cast<int>(weights.back().cols()); }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

/// Gradient of a scalar objective w.r.t. every entry of MlpParams.
template <typename Scalar>
struct Gradients {
  std::vector<Mat<Scalar>> weights;
  std::vector<Vec<Scalar>> biases;

  static Gradients zeros_like(const MlpParams<Scalar>& p) {
    Gradients g;
    for (const auto& w : p.weights) g.weights.push_back(Mat<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : p.biases) g.biases.push_back(Vec<Scalar>::Zero(b.size()));
    return g;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  Gradients& operator+=(const Gradients& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }
  Gradients& operator-=(const Gradients& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] -= o.weights[l];
      biases[l] -= o.biases[l];
    }
    return *this;
  }
  Gradients& operator*=(Scalar s) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] *= s;
      biases[l] *= s;
    }
    return *this;
  }
};

template <typename Scalar>
Scalar dot(const Gradients<Scalar>& a, const Gradients<Scalar>& b) {
  Scalar s(0);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    s += (a.weights[l].array() * b.weights[l].array()).sum();
    s += a.biases[l].dot(b.biases[l]);
  }
  return s;
}

template <typename Scalar>
Scalar squared_norm(const Gradients<Scalar>& g) {
  return dot(g, g);
}

/// Glorot-uniform weights, zero biases; deterministic per seed.
template <typename Scalar>
MlpParams<Scalar> init_mlp(const std::vector<int>& sizes, Activation activation,
                           std::uint64_t seed) {
  if (sizes.size() < 2) throw ConfigError("init_mlp: need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ConfigError("init_mlp: layer sizes must be positive");
  std::mt19937_64 rng(seed);
  MlpParams<Scalar> p;
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat<Scalar> w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i)
      for (int j = 0; j < fan_out; ++j) w(i, j) = Scalar(dist(rng));
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vec<Scalar>::Zero(fan_out));
  }
  return p;
}

namespace detail {

template <typename Scalar>
void check_input(const MlpParams<Scalar>& p, const Eigen::Ref<const Mat<Scalar>>& x) {
  if (p.weights.empty()) throw ShapeError("mlp has no layers");
  if (x.cols() != p.input_dim()) {
    throw ShapeError("feature dimension " + std::to_string(x.cols()) + " does not match input size " +
                     std::to_string(p.input_dim()));
  }
}

template <typename Scalar>
Mat<Scalar> activate(Activation a, const Mat<Scalar>& pre) {
  if (a == Activation::kTanh) return pre.array().tanh().matrix();
  return pre.cwiseMax(Scalar(0));
}

// Derivative of the activation, from pre- and post-activation values.
template <typename Scalar>
Mat<Scalar> activation_slope(Activation a, const Mat<Scalar>& pre, const Mat<Scalar>& post) {
  if (a == Activation::kTanh) return (Scalar(1) - post.array().square()).matrix();
  return (pre.array() > Scalar(0)).template cast<Scalar>().matrix();
}

}  // namespace detail

/// Logits for every row of x.
template <typename Scalar>
Mat<Scalar> forward_logits(const MlpParams<Scalar>& p, const Eigen::Ref<const Mat<Scalar>>& x) {
  detail::check_input(p, x);
  Mat<Scalar> a = x;
  const std::size_t layers = p.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Mat<Scalar> pre = a * p.weights[l];
    pre.rowwise() += p.biases[l].transpose();
    a = (l + 1 < layers) ? detail::activate(p.activation, pre) : std::move(pre);
  }
  return a;
}

/// Reverse-mode gradient of sum_i <logits_i, grad_logits_i>.
///
/// The caller folds any batch averaging into grad_logits.
template <typename Scalar>
Gradients<Scalar> backward(const MlpParams<Scalar>& p, const Eigen::Ref<const Mat<Scalar>>& x,
                           const Eigen::Ref<const Mat<Scalar>>& grad_logits) {
  detail::check_input(p, x);
  if (grad_logits.rows() != x.rows() || grad_logits.cols() != p.num_classes()) {
    throw ShapeError("backward: grad_logits shape does not match the batch");
  }
  const std::size_t layers = p.weights.size();
  std::vector<Mat<Scalar>> pre(layers);
  std::vector<Mat<Scalar>> post(layers + 1);
  post[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = post[l] * p.weights[l];
    pre[l].rowwise() += p.biases[l].transpose();
    post[l + 1] = (l + 1 < layers) ? detail::activate(p.activation, pre[l]) : pre[l];
  }

  Gradients<Scalar> g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Mat<Scalar> delta = grad_logits;
  for (std::size_t l = layers; l-- > 0;) {
    g.weights[l] = post[l].transpose() * delta;
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * p.weights[l].transpose())
                  .cwiseProduct(detail::activation_slope(p.activation, pre[l - 1], post[l]));
    }
  }
  return g;
}

/// params - step * grads.
template <typename Scalar>
MlpParams<Scalar> sgd_step(const MlpParams<Scalar>& p, const Gradients<Scalar>& g, Scalar step) {
  if (!(step >= Scalar(0))) throw DomainError("sgd_step: step size must be nonnegative");
  if (g.weights.size() != p.weights.size()) throw ShapeError("sgd_step: gradient shape mismatch");
  if (!g.all_finite()) throw NumericError("sgd_step: non-finite gradients");
  MlpParams<Scalar> out = p;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (g.weights[l].rows() != p.weights[l].rows() || g.weights[l].cols() != p.weights[l].cols() ||
        g.biases[l].size() != p.biases[l].size()) {
      throw ShapeError("sgd_step: gradient shape mismatch");
    }
    out.weights[l] -= step * g.weights[l];
    out.biases[l] -= step * g.biases[l];
  }
  return out;
}

/// Flattened parameters: per layer, weights in row-major order then biases.
template <typename Scalar>
std::vector<Scalar> flatten(const MlpParams<Scalar>& p) {
  std::vector<Scalar> flat;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const auto& w = p.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) flat.push_back(w(i, j));
    for (Eigen::Index j = 0; j < p.biases[l].size(); ++j) flat.push_back(p.biases[l][j]);
  }
  return flat;
}

template <typename Scalar>
MlpParams<Scalar> unflatten(const std::vector<Scalar>& flat, const std::vector<int>& sizes,
                            Activation activation) {
  if (sizes.size() < 2) throw ShapeError("unflatten: need at least two layer sizes");
  MlpParams<Scalar> p;
  p.activation = activation;
  std::size_t pos = 0;
  auto take = [&]() {
    if (pos >= flat.size()) throw ShapeError("unflatten: parameter array too short");
    return flat[pos++];
  };
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Mat<Scalar> w(sizes[l], sizes[l + 1]);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = take();
    Vec<Scalar> b(sizes[l + 1]);
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] = take();
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  if (pos != flat.size()) throw ShapeError("unflatten: parameter array too long");
  return p;
}

}  // namespace arl
