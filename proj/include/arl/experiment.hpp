#pragma once

// Experiment orchestration behind the `arl` command line tool: JSON
// configuration, seeded runs with on-disk artifacts, the ablation harness and
// figure-data emitters.

#include "arl/data.hpp"
#include "arl/meta.hpp"
#include "arl/theory.hpp"

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace arl {

struct DatasetSpec {
  std::string generator = "blobs";  // "blobs" or "csv"
  std::filesystem::path csv_path;
  int train_size = 3000;
  int meta_size = 30;
  int test_size = 1000;
  double test_fraction = 0.2;  // csv only
  int num_classes = 3;
  int dim = 2;
  double spread = 0.4;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed
};

struct NoiseSpec {
  NoiseType type = NoiseType::kSymmetric;
  double rate = 0.0;
  std::vector<std::vector<int>> superclasses;
  bool exact_count = false;
};

struct AblationGrid {
  std::vector<double> q{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> lambda_factor{0.5, 1.0, 2.0, 4.0};  // multiples of ln c
  std::vector<double> d{2.0, 3.0, 5.0};
  std::vector<double> gamma{0.1, 1.0, 10.0};
  std::vector<double> t1{0.2, 0.5, 0.8};
  std::vector<double> t2{1.2, 1.5, 2.0};
};

struct TheoryCase {
  HyperParams hyper;
};

struct TheorySpec {
  int num_classes = 3;
  int points = 4;
  double grid_step = 0.02;
  std::vector<double> noise_rates{0.1, 0.3, 0.6};
  std::vector<TheoryCase> cases;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  NoiseSpec noise;
  TrainConfig train;  // train.initial carries the loss variant
  // Set for csv datasets whose lambda is a multiple of ln c, resolved after loading.
  std::optional<double> lambda_factor;
  std::filesystem::path output_dir = "arl_out";
  bool emit_weights = true;    // polysoft runs only
  bool emit_losscurve = true;
  AblationGrid grid;
  int workers = 0;  // 0 = hardware concurrency
  TheorySpec theory;

  /// Strict parser: unknown keys and out-of-domain values are ConfigErrors.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Fully resolved configuration; from_json(to_json()) reproduces it.
  nlohmann::json to_json() const;
  /// Applies the experiment seed to training and returns the resolved config.
  ExperimentConfig with_seed(std::uint64_t s) const;
};

/// Stable 64-bit FNV-1a hash of the canonical JSON text, as hex.
std::string config_hash(const ExperimentConfig& config);

/// Clean data, split, and noise injection on the training part only.
MetaSplit prepare_data(const ExperimentConfig& config);

struct RunArtifacts {
  std::filesystem::path metrics_csv;
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> weights_csv;
  std::optional<std::filesystem::path> losscurve_csv;
  TrainResult result;
  MetaSplit data;
};

RunArtifacts run_experiment(const ExperimentConfig& config);

enum class AblationMode { kFixed, kOpt1, kOpt2, kAdaptive };
std::string_view to_string(AblationMode mode);
AblationMode parse_ablation_mode(std::string_view name);
std::vector<AblationMode> parse_ablation_modes(std::string_view comma_list);

struct AblationCurve {
  AblationMode mode;
  std::vector<int> iterations;
  std::vector<double> test_acc;
  HyperParams hyper;  // final (adaptive, opt1) or selected (fixed) hyperparameters
  double final_acc() const { return test_acc.empty() ? 0.0 : test_acc.back(); }
};

struct AblationResult {
  std::vector<AblationCurve> curves;  // in the requested order
  const AblationCurve& at(AblationMode mode) const;
};

/// Candidate hyperparameter sets for the fixed (cross-validated) mode.
std::vector<HyperParams> ablation_candidates(const HyperParams& base, const AblationGrid& grid,
                                             int num_classes);

AblationResult run_ablation(const ExperimentConfig& config, const std::vector<AblationMode>& modes);
AblationResult run_ablation(const ExperimentConfig& config, const MetaSplit& data,
                            const std::vector<AblationMode>& modes);
void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result);

struct LossCurveRow {
  double x = 0.0;  // p of the labelled class, or the CE value for polysoft
  double ce = 0.0;
  double zero_one = 0.0;
  double learned = 0.0;
};

/// One point of the learned-loss curve on the binary diagnostic grid.
LossCurveRow losscurve_point(const HyperParams& h, double x);

/// 500 points: p in [0.001, 1] (CE value in [0, 3 lambda] for polysoft).
std::vector<LossCurveRow> emit_losscurve(const HyperParams& h);
void write_losscurve_csv(const std::filesystem::path& path, const HyperParams& h,
                         const std::vector<LossCurveRow>& rows);

/// Learned loss as a function of the CE value of the labelled class.
double learned_loss_at_ce(const HyperParams& h, double ce_value);

/// Smallest CE value on a uniform grid over [0, max_ce] where the slope of the
/// learned loss falls below `threshold`; max_ce if it never does.
double flattening_point(const HyperParams& h, double threshold = 0.05, double max_ce = 10.0,
                        double step = 1e-3);

/// Theorem checks for every case and noise rate of the theory section.
nlohmann::json verify_bounds(const TheorySpec& spec);

/// Writes train/meta/test CSVs, the clean labels of the training set and a manifest.
void gen_data(const ExperimentConfig& config);

}  // namespace arl
