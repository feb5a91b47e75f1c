#pragma once

#include "arl/numeric.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>
#include <json.hpp>

namespace arl {

enum class NoiseType { kNone, kSymmetric, kAsymmetric, kHierarchical };

std::string_view to_string(NoiseType type);
NoiseType parse_noise_type(std::string_view name);

struct Provenance {
  std::string generator = "unknown";
  NoiseType noise = NoiseType::kNone;
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Features (one sample per row) with observed labels and hidden clean labels.
/// For a clean dataset `labels == clean_labels`.
struct Dataset {
  MatrixXd features;
  std::vector<int> labels;
  std::vector<int> clean_labels;
  int num_classes = 0;
  Provenance provenance;
  // Original label value of each contiguous class index (CSV ingestion).
  std::vector<long long> label_values;

  std::size_t size() const { return labels.size(); }
  int dim() const { return static_cast<int>(features.cols()); }
  bool is_clean(std::size_t i) const { return labels[i] == clean_labels[i]; }
  double noisy_fraction() const;

  /// Throws ConfigError if lengths or label ranges disagree.
  void validate() const;

  Dataset subset(const std::vector<int>& indices) const;
};

struct MetaSplit {
  Dataset train;
  Dataset meta;
  Dataset test;
};

/// c Gaussian clusters, balanced round-robin labels. Centers lie on the unit
/// circle for d_in = 2, on random orthonormal directions for d_in > 2 (unit
/// random directions when c > d_in) and evenly on [-1, 1] for d_in = 1.
Dataset gen_blobs(int n, int num_classes, int dim, double spread, std::uint64_t seed);

struct NoiseOptions {
  // Flip exactly floor(rate * n) samples instead of flipping each i.i.d.
  bool exact_count = false;
};

/// Each sample flips with probability rate to a uniformly chosen other class.
Dataset inject_symmetric(const Dataset& clean, double rate, std::uint64_t seed,
                         NoiseOptions options = {});

/// Each sample of class j flips with probability rate to (j+1) or (j+2) mod c.
Dataset inject_asymmetric(const Dataset& clean, double rate, std::uint64_t seed,
                          NoiseOptions options = {});

/// Flips stay inside the superclass block that contains the true class.
Dataset inject_hierarchical(const Dataset& clean, double rate,
                            const std::vector<std::vector<int>>& superclasses,
                            std::uint64_t seed, NoiseOptions options = {});

/// Disjoint train/meta/test split. The meta set is stratified when meta_size
/// is a multiple of the class count and every class has enough samples.
MetaSplit split_meta(const Dataset& clean, int meta_size, double test_fraction,
                     std::uint64_t seed);

/// Rows `feature_1,...,feature_d,label` with integer labels; labels are
/// remapped to 0..c-1 in ascending order of their original values.
Dataset load_csv(const std::filesystem::path& path);

/// Inverse of load_csv, writing observed labels (original values if known).
void write_csv(const std::filesystem::path& path, const Dataset& data);

nlohmann::json dataset_manifest(const Dataset& data);

}  // namespace arl
