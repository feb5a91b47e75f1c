#include "arl/meta.hpp"

#include "arl/errors.hpp"
#include "arl/losses.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace arl {

namespace {

std::string describe(const HyperParams& h) {
  std::ostringstream out;
  out << to_string(h.variant);
  const auto names = h.active_names();
  const VectorXd values = h.active_values();
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << ' ' << names[k] << '=' << format_number(values[static_cast<Eigen::Index>(k)]);
  }
  return out.str();
}

ObjectiveEval objective(const Params& w, const HyperParams& h, const Batch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.labels.size());
  if (n == 0) throw ConfigError("empty minibatch");
  const MatrixXd logits = forward_logits<double>(w, batch.features);
  if (!logits.allFinite()) throw NumericError("non-finite logits under " + describe(h));
  MatrixXd grad_logits(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd z = logits.row(i).transpose();
    const auto e = evaluate_loss<double>(h, z, batch.labels[static_cast<std::size_t>(i)]);
    total += e.value;
    grad_logits.row(i) = e.grad_logits.transpose() / static_cast<double>(n);
  }
  return {total / static_cast<double>(n), backward<double>(w, batch.features, grad_logits)};
}

HyperParams ce_hyper() {
  HyperParams h;
  h.variant = LossVariant::kCe;
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("train: alpha must be positive");
  if (!(beta >= 0.0)) throw ConfigError("train: beta must be nonnegative");
  if (batch_size < 1 || meta_batch_size < 1) throw ConfigError("train: batch sizes must be >= 1");
  if (iterations < 1) throw ConfigError("train: iterations must be >= 1");
  if (!(fd_eps > 0.0)) throw ConfigError("train: fd_eps must be positive");
  if (metrics_every < 1) throw ConfigError("train: metrics_every must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw ConfigError("train: lr_decay must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train: hidden layer sizes must be positive");
  initial.validate();
}

double TrainConfig::alpha_at(int iteration) const {
  double a = alpha;
  for (int m : lr_milestones)
    if (iteration >= m) a *= lr_decay;
  return a;
}

double TrainConfig::beta_at(int iteration) const {
  if (!decay_beta) return beta;
  double b = beta;
  for (int m : lr_milestones)
    if (iteration >= m) b *= lr_decay;
  return b;
}

BatchSampler::BatchSampler(std::size_t population, std::uint64_t seed)
    : order_(population), cursor_(population), rng_(seed) {
  std::iota(order_.begin(), order_.end(), 0);
}

std::vector<int> BatchSampler::next(std::size_t batch_size) {
  if (order_.empty()) throw ConfigError("cannot sample from an empty dataset");
  batch_size = std::min(batch_size, order_.size());
  if (cursor_ + batch_size > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  std::vector<int> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size));
  cursor_ += batch_size;
  return out;
}

Batch make_batch(const Dataset& data, const std::vector<int>& indices, bool clean_labels) {
  Batch b;
  b.features.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  b.labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    b.features.row(static_cast<Eigen::Index>(k)) = data.features.row(indices[k]);
    b.labels.push_back(clean_labels ? data.clean_labels[indices[k]] : data.labels[indices[k]]);
  }
  return b;
}

ObjectiveEval train_objective(const Params& w, const HyperParams& h, const Batch& batch) {
  return objective(w, h, batch);
}

ObjectiveEval meta_objective(const Params& w, const Batch& batch) {
  return objective(w, ce_hyper(), batch);
}

Params virtual_step(const Params& w, const HyperParams& h, const Batch& batch, double alpha) {
  const auto obj = train_objective(w, h, batch);
  if (!obj.grad.all_finite() || !std::isfinite(obj.mean_loss)) {
    throw NumericError("virtual step: non-finite training gradient at " + describe(h));
  }
  return sgd_step<double>(w, obj.grad, alpha);
}

VectorXd hypergradient(const Params& w, const UnconstrainedHyper& theta, const HyperParams& base,
                       const Batch& train_batch, const Batch& meta_batch, double alpha,
                       double fd_eps) {
  const Eigen::Index k_count = theta.theta.size();
  if (k_count == 0) throw ConfigError("hypergradient: loss has no learnable hyperparameters");
  if (!(fd_eps > 0.0)) throw ConfigError("hypergradient: fd_eps must be positive");
  const double scale = std::max(1.0, theta.theta.cwiseAbs().maxCoeff());
  if (fd_eps < 1e-8 * scale) {
    warn("hypergradient: fd_eps " + format_number(fd_eps) +
         " is below the resolution of theta (scale " + format_number(scale) + ")");
  }

  const HyperParams h = from_unconstrained(theta, base);
  const Params lookahead = virtual_step(w, h, train_batch, alpha);
  const Grads meta_grad = meta_objective(lookahead, meta_batch).grad;

  VectorXd out(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    UnconstrainedHyper plus = theta;
    UnconstrainedHyper minus = theta;
    plus.theta[k] += fd_eps;
    minus.theta[k] -= fd_eps;
    Grads mixed = train_objective(w, from_unconstrained(plus, base), train_batch).grad;
    mixed -= train_objective(w, from_unconstrained(minus, base), train_batch).grad;
    mixed *= 1.0 / (2.0 * fd_eps);
    out[k] = -alpha * dot(meta_grad, mixed);
  }
  if (!out.allFinite()) throw NumericError("hypergradient: non-finite value at " + describe(h));
  return out;
}

UnconstrainedHyper meta_update(const UnconstrainedHyper& theta, const VectorXd& hypergrad,
                               double beta) {
  if (hypergrad.size() != theta.theta.size()) throw ShapeError("meta_update: size mismatch");
  if (!hypergrad.allFinite()) throw NumericError("meta_update: non-finite hypergradient");
  if (!(beta >= 0.0)) throw DomainError("meta_update: beta must be nonnegative");
  return {theta.theta - beta * hypergrad};
}

TrainState init_state(const TrainConfig& config, int input_dim, int num_classes,
                      std::size_t train_size, std::size_t meta_size) {
  config.validate();
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(num_classes);

  // Independent streams for weights, training batches and meta batches.
  std::seed_seq seq{config.seed, std::uint64_t{0x41524c}};
  std::uint64_t seeds[3];
  {
    std::uint32_t raw[6];
    seq.generate(raw, raw + 6);
    for (int i = 0; i < 3; ++i) seeds[i] = (std::uint64_t{raw[2 * i]} << 32) | raw[2 * i + 1];
  }

  TrainState s;
  s.w = init_mlp<double>(sizes, config.activation, seeds[0]);
  s.hyper = config.initial;
  s.theta = to_unconstrained(config.initial);
  s.train_sampler = BatchSampler(train_size, seeds[1]);
  s.meta_sampler = BatchSampler(meta_size, seeds[2]);
  if (config.momentum > 0.0) s.velocity = Grads::zeros_like(s.w);
  return s;
}

StepStats arl_step(TrainState& state, const Dataset& train, const Dataset& meta,
                   const TrainConfig& config) {
  const Batch train_batch = make_batch(train, state.train_sampler.next(config.batch_size));
  const Batch meta_batch = make_batch(meta, state.meta_sampler.next(config.meta_batch_size), true);
  const double alpha = config.alpha_at(state.iteration);
  const double beta = config.beta_at(state.iteration);

  StepStats stats;
  {
    const MatrixXd logits = forward_logits<double>(state.w, meta_batch.features);
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const VectorXd p = softmax<double>(logits.row(i).transpose());
      total += -std::log(std::max(p[meta_batch.labels[static_cast<std::size_t>(i)]], kProbabilityFloor));
    }
    stats.meta_loss = total / static_cast<double>(logits.rows());
  }

  ObjectiveEval obj;
  try {
    if (beta > 0.0 && state.theta.theta.size() > 0) {
      const VectorXd hg = hypergradient(state.w, state.theta, state.hyper, train_batch, meta_batch,
                                        alpha, config.fd_eps);
      state.theta = meta_update(state.theta, hg, beta);
      state.hyper = from_unconstrained(state.theta, state.hyper);
    }
    obj = train_objective(state.w, state.hyper, train_batch);
    if (!std::isfinite(obj.mean_loss) || !obj.grad.all_finite()) {
      throw NumericError("non-finite training loss or gradient");
    }
  } catch (const NumericError& e) {
    throw TrainingDiverged("training diverged at iteration " + std::to_string(state.iteration) +
                               " with " + describe(state.hyper) + ": " + e.what(),
                           state);
  }
  stats.train_loss = obj.mean_loss;
  if (state.velocity) {
    *state.velocity *= config.momentum;
    *state.velocity += obj.grad;
    state.w = sgd_step<double>(state.w, *state.velocity, alpha);
  } else {
    state.w = sgd_step<double>(state.w, obj.grad, alpha);
  }
  ++state.iteration;
  return stats;
}

double accuracy(const Params& w, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const MatrixXd logits = forward_logits<double>(w, data.features);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    correct += arg == data.clean_labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult continue_training(TrainState state, const Dataset& train, const Dataset& meta,
                              const Dataset& test, const TrainConfig& config, int iterations,
                              TrainOptions options) {
  if (train.size() == 0 || meta.size() == 0) throw ConfigError("training and meta sets must be non-empty");
  TrainResult result;
  if (options.keep_snapshots) result.snapshots.push_back(state);
  const int stop = state.iteration + iterations;
  double train_sum = 0.0;
  double meta_sum = 0.0;
  int count = 0;
  while (state.iteration < stop) {
    const StepStats s = arl_step(state, train, meta, config);
    train_sum += s.train_loss;
    meta_sum += s.meta_loss;
    ++count;
    if (state.iteration % config.metrics_every == 0 || state.iteration == stop) {
      MetricsRow row;
      row.iteration = state.iteration;
      row.train_loss = train_sum / count;
      row.meta_loss = meta_sum / count;
      row.test_acc = accuracy(state.w, test);
      row.hyper = state.hyper.active_values();
      result.metrics.push_back(std::move(row));
      if (options.keep_snapshots) result.snapshots.push_back(state);
      train_sum = meta_sum = 0.0;
      count = 0;
    }
  }
  result.state = std::move(state);
  return result;
}

TrainResult arl_train(const Dataset& train, const Dataset& meta, const Dataset& test,
                      const TrainConfig& config, TrainOptions options) {
  if (train.size() == 0) throw ConfigError("training set is empty");
  if (meta.size() == 0) throw ConfigError("meta set is empty");
  if (train.num_classes != meta.num_classes || train.dim() != meta.dim()) {
    throw ConfigError("training and meta sets disagree on classes or dimension");
  }
  TrainState state = init_state(config, train.dim(), train.num_classes, train.size(), meta.size());
  return continue_training(std::move(state), train, meta, test, config, config.iterations, options);
}

VectorXd compute_sample_weights(const Params& w, const HyperParams& h, const Dataset& data) {
  if (h.variant != LossVariant::kPolySoft) {
    throw ConfigError("sample weights are defined for the polysoft loss only");
  }
  const MatrixXd logits = forward_logits<double>(w, data.features);
  VectorXd weights(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const VectorXd p = softmax<double>(logits.row(i).transpose());
    const double ce_value = ce<double>(p, data.labels[static_cast<std::size_t>(i)]).value;
    weights[i] = polysoft_weight(ce_value, h.lambda, h.d);
  }
  return weights;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics '" + path.string() + "'");
  out << "iter,train_loss,meta_loss,test_acc";
  const Eigen::Index k = rows.empty() ? 0 : rows.front().hyper.size();
  for (Eigen::Index j = 0; j < k; ++j) out << ",hyper_" << (j + 1);
  out << '\n';
  for (const auto& r : rows) {
    out << r.iteration << ',' << format_number(r.train_loss) << ',' << format_number(r.meta_loss)
        << ',' << format_number(r.test_acc);
    for (Eigen::Index j = 0; j < r.hyper.size(); ++j) out << ',' << format_number(r.hyper[j]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing metrics '" + path.string() + "'");
}

void write_weights_csv(const std::filesystem::path& path, const Dataset& data,
                       const VectorXd& weights) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write weights '" + path.string() + "'");
  out << "sample_id,is_clean,weight\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i << ',' << (data.is_clean(i) ? 1 : 0) << ','
        << format_number(weights[static_cast<Eigen::Index>(i)]) << '\n';
  }
  if (!out) throw IoError("failed writing weights '" + path.string() + "'");
}

}  // namespace arl
