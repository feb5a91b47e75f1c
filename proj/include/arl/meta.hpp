#pragma once

// Adaptive robust loss training: a one-step lookahead of the classifier
// drives SGD on the loss hyperparameters through the clean meta loss.

#include "arl/data.hpp"
#include "arl/hyper.hpp"
#include "arl/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

namespace arl {

using Params = MlpParams<double>;
using Grads = Gradients<double>;

struct TrainConfig {
  double alpha = 0.1;       // classifier step size
  double beta = 0.1;        // hyperparameter step size
  int batch_size = 100;     // n
  int meta_batch_size = 30; // m
  int iterations = 1000;    // T
  std::uint64_t seed = 0;
  double fd_eps = 1e-3;     // mixed-partial step in unconstrained coordinates
  HyperParams initial;      // loss variant and starting hyperparameters
  std::vector<int> hidden{16};
  Activation activation = Activation::kTanh;
  int metrics_every = 50;
  double momentum = 0.0;
  // Step decay: multiply alpha by lr_decay at each milestone iteration.
  std::vector<int> lr_milestones;
  double lr_decay = 0.1;
  bool decay_beta = false;

  void validate() const;
  double alpha_at(int iteration) const;
  double beta_at(int iteration) const;
};

/// Minibatch indices drawn from a reshuffled permutation, epoch by epoch.
class BatchSampler {
 public:
  BatchSampler() = default;
  BatchSampler(std::size_t population, std::uint64_t seed);
  std::vector<int> next(std::size_t batch_size);

 private:
  std::vector<int> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

struct Batch {
  MatrixXd features;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, const std::vector<int>& indices, bool clean_labels = false);

struct TrainState {
  Params w;
  HyperParams hyper;
  UnconstrainedHyper theta;
  int iteration = 0;
  BatchSampler train_sampler;
  BatchSampler meta_sampler;
  std::optional<Grads> velocity;
};

struct MetricsRow {
  int iteration = 0;
  double train_loss = 0.0;
  double meta_loss = 0.0;
  double test_acc = 0.0;
  VectorXd hyper;  // constrained coordinates
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
  std::vector<TrainState> snapshots;  // initial state and the state at every metrics row
};

struct ObjectiveEval {
  double mean_loss = 0.0;
  Grads grad;
};

/// Mean loss over the batch and its gradient w.r.t. the classifier.
ObjectiveEval train_objective(const Params& w, const HyperParams& h, const Batch& batch);

/// Clean meta objective: mean cross entropy.
ObjectiveEval meta_objective(const Params& w, const Batch& batch);

/// w - alpha * grad_w L_train(batch; hyper); throws NumericError on non-finite gradients.
Params virtual_step(const Params& w, const HyperParams& h, const Batch& batch, double alpha);

/// Gradient of the meta loss at the virtual step w.r.t. the unconstrained
/// hyperparameters: -alpha * g^T J_k with g the meta gradient at the lookahead
/// and J_k the central difference of grad_w L_train along theta_k.
VectorXd hypergradient(const Params& w, const UnconstrainedHyper& theta, const HyperParams& base,
                       const Batch& train_batch, const Batch& meta_batch, double alpha,
                       double fd_eps);

/// theta - beta * hypergrad.
UnconstrainedHyper meta_update(const UnconstrainedHyper& theta, const VectorXd& hypergrad,
                               double beta);

struct StepStats {
  double train_loss = 0.0;
  double meta_loss = 0.0;
};

TrainState init_state(const TrainConfig& config, int input_dim, int num_classes,
                      std::size_t train_size, std::size_t meta_size);

/// One iteration: sample batches, update the hyperparameters (when beta > 0
/// and the loss has any), then update w with the new hyperparameters on the
/// same training batch.
StepStats arl_step(TrainState& state, const Dataset& train, const Dataset& meta,
                   const TrainConfig& config);

double accuracy(const Params& w, const Dataset& data);

struct TrainOptions {
  bool keep_snapshots = false;
};

/// Thrown when the training loss becomes non-finite; carries the last finite state.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainState state)
      : NumericError(what), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

TrainResult arl_train(const Dataset& train, const Dataset& meta, const Dataset& test,
                      const TrainConfig& config, TrainOptions options = {});

/// Continues training from a state for `iterations` more steps, recording
/// metrics on the same cadence.
TrainResult continue_training(TrainState state, const Dataset& train, const Dataset& meta,
                              const Dataset& test, const TrainConfig& config, int iterations,
                              TrainOptions options = {});

/// Per-sample self-paced weights of a PolySoft hyperparameter set, using the
/// observed labels.
VectorXd compute_sample_weights(const Params& w, const HyperParams& h, const Dataset& data);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_weights_csv(const std::filesystem::path& path, const Dataset& data,
                       const VectorXd& weights);

}  // namespace arl
