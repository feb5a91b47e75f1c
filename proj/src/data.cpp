#include "arl/data.hpp"

#include "arl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace arl {

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw DomainError("noise rate " + std::to_string(rate) + " outside [0, 1]");
  }
}

// Chooses which samples flip: i.i.d. Bernoulli(rate) or an exact count.
std::vector<bool> flip_mask(std::size_t n, double rate, std::mt19937_64& rng,
                            NoiseOptions options) {
  std::vector<bool> mask(n, false);
  if (options.exact_count) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
    for (std::size_t k = 0; k < count; ++k) mask[order[k]] = true;
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) mask[i] = u(rng) < rate;
  }
  return mask;
}

template <typename PickTarget>
Dataset inject(const Dataset& clean, double rate, std::uint64_t seed, NoiseOptions options,
               NoiseType type, PickTarget pick) {
  clean.validate();
  check_rate(rate);
  std::mt19937_64 rng(seed);
  const auto mask = flip_mask(clean.size(), rate, rng, options);
  Dataset out = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const int truth = clean.clean_labels[i];
    out.labels[i] = mask[i] ? pick(truth, rng) : truth;
  }
  out.provenance.noise = type;
  out.provenance.noise_rate = rate;
  out.provenance.seed = seed;
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string_view to_string(NoiseType type) {
  switch (type) {
    case NoiseType::kNone:
      return "none";
    case NoiseType::kSymmetric:
      return "symmetric";
    case NoiseType::kAsymmetric:
      return "asymmetric";
    case NoiseType::kHierarchical:
      return "hierarchical";
  }
  return "?";
}

NoiseType parse_noise_type(std::string_view name) {
  for (auto t : {NoiseType::kNone, NoiseType::kSymmetric, NoiseType::kAsymmetric,
                 NoiseType::kHierarchical}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown noise type '" + std::string(name) + "'");
}

double Dataset::noisy_fraction() const {
  if (labels.empty()) return 0.0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) flipped += labels[i] != clean_labels[i];
  return static_cast<double>(flipped) / static_cast<double>(labels.size());
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size() ||
      labels.size() != clean_labels.size()) {
    throw ConfigError("dataset: feature and label counts disagree");
  }
  if (num_classes < 1) throw ConfigError("dataset: class count must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || clean_labels[i] < 0 ||
        clean_labels[i] >= num_classes) {
      throw ConfigError("dataset: label out of range at row " + std::to_string(i));
    }
  }
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  out.clean_labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(indices[k]);
    out.labels.push_back(labels[indices[k]]);
    out.clean_labels.push_back(clean_labels[indices[k]]);
  }
  out.num_classes = num_classes;
  out.provenance = provenance;
  out.label_values = label_values;
  return out;
}

Dataset gen_blobs(int n, int num_classes, int dim, double spread, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("gen_blobs: need at least two classes");
  if (n < num_classes) throw ConfigError("gen_blobs: need at least one sample per class");
  if (dim < 1) throw ConfigError("gen_blobs: dimension must be positive");
  if (!(spread > 0.0)) throw ConfigError("gen_blobs: spread must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  MatrixXd centers(num_classes, dim);
  if (dim == 1) {
    for (int k = 0; k < num_classes; ++k) centers(k, 0) = -1.0 + 2.0 * k / (num_classes - 1);
  } else if (dim == 2) {
    const double pi = std::acos(-1.0);
    for (int k = 0; k < num_classes; ++k) {
      centers(k, 0) = std::cos(2.0 * pi * k / num_classes);
      centers(k, 1) = std::sin(2.0 * pi * k / num_classes);
    }
  } else {
    MatrixXd g(dim, num_classes);
    for (int i = 0; i < dim; ++i)
      for (int k = 0; k < num_classes; ++k) g(i, k) = normal(rng);
    if (num_classes <= dim) {
      Eigen::HouseholderQR<MatrixXd> qr(g);
      const MatrixXd q = qr.householderQ() * MatrixXd::Identity(dim, num_classes);
      centers = q.transpose();
    } else {
      centers = g.transpose();
      centers.rowwise().normalize();
    }
  }

  Dataset out;
  out.num_classes = num_classes;
  out.features.resize(n, dim);
  out.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int k = i % num_classes;
    out.labels[i] = k;
    for (int j = 0; j < dim; ++j) out.features(i, j) = centers(k, j) + spread * normal(rng);
  }
  out.clean_labels = out.labels;
  out.provenance.generator = "blobs";
  out.provenance.seed = seed;
  return out;
}

Dataset inject_symmetric(const Dataset& clean, double rate, std::uint64_t seed,
                         NoiseOptions options) {
  const int c = clean.num_classes;
  if (c < 2 && rate > 0.0) throw ConfigError("symmetric noise needs at least two classes");
  return inject(clean, rate, seed, options, NoiseType::kSymmetric,
                [c](int truth, std::mt19937_64& rng) {
                  std::uniform_int_distribution<int> offset(1, c - 1);
                  return (truth + offset(rng)) % c;
                });
}

Dataset inject_asymmetric(const Dataset& clean, double rate, std::uint64_t seed,
                          NoiseOptions options) {
  const int c = clean.num_classes;
  if (c < 3) throw ConfigError("asymmetric noise needs at least three classes");
  return inject(clean, rate, seed, options, NoiseType::kAsymmetric,
                [c](int truth, std::mt19937_64& rng) {
                  std::uniform_int_distribution<int> which(1, 2);
                  return (truth + which(rng)) % c;
                });
}

Dataset inject_hierarchical(const Dataset& clean, double rate,
                            const std::vector<std::vector<int>>& superclasses,
                            std::uint64_t seed, NoiseOptions options) {
  const int c = clean.num_classes;
  std::vector<int> block_of(c, -1);
  for (std::size_t b = 0; b < superclasses.size(); ++b) {
    for (int k : superclasses[b]) {
      if (k < 0 || k >= c) throw ConfigError("superclass lists unknown class " + std::to_string(k));
      if (block_of[k] != -1) throw ConfigError("class " + std::to_string(k) + " in two superclasses");
      block_of[k] = static_cast<int>(b);
    }
  }
  for (int k = 0; k < c; ++k) {
    if (block_of[k] == -1) throw ConfigError("class " + std::to_string(k) + " has no superclass");
    if (rate > 0.0 && superclasses[block_of[k]].size() < 2) {
      throw ConfigError("singleton superclass {" + std::to_string(k) +
                        "} cannot be corrupted with a positive noise rate");
    }
  }
  return inject(clean, rate, seed, options, NoiseType::kHierarchical,
                [&](int truth, std::mt19937_64& rng) {
                  const auto& block = superclasses[block_of[truth]];
                  std::uniform_int_distribution<std::size_t> pick(0, block.size() - 2);
                  std::size_t idx = pick(rng);
                  // skip the true class inside its block
                  const auto self = static_cast<std::size_t>(
                      std::find(block.begin(), block.end(), truth) - block.begin());
                  if (idx >= self) ++idx;
                  return block[idx];
                });
}

MetaSplit split_meta(const Dataset& clean, int meta_size, double test_fraction,
                     std::uint64_t seed) {
  clean.validate();
  if (meta_size < 0) throw ConfigError("split_meta: meta size must be nonnegative");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("split_meta: test fraction must lie in [0, 1)");
  }
  const auto n = static_cast<int>(clean.size());
  const int test_size = static_cast<int>(std::lround(test_fraction * n));
  if (meta_size + test_size >= n) {
    throw ConfigError("split_meta: meta (" + std::to_string(meta_size) + ") + test (" +
                      std::to_string(test_size) + ") leaves no training data out of " +
                      std::to_string(n));
  }

  std::mt19937_64 rng(seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const int c = clean.num_classes;
  std::vector<int> per_class(c, 0);
  for (int y : clean.clean_labels) ++per_class[y];
  bool stratify = meta_size > 0 && meta_size % c == 0;
  if (stratify) {
    for (int k = 0; k < c; ++k) stratify = stratify && per_class[k] >= meta_size / c;
  }

  std::vector<bool> taken(n, false);
  std::vector<int> meta;
  if (stratify) {
    std::vector<int> quota(c, meta_size / c);
    for (int i : order) {
      const int y = clean.clean_labels[i];
      if (quota[y] > 0) {
        --quota[y];
        meta.push_back(i);
        taken[i] = true;
      }
    }
  } else {
    for (int k = 0; k < meta_size; ++k) {
      meta.push_back(order[k]);
      taken[order[k]] = true;
    }
  }
  std::vector<int> test;
  std::vector<int> train;
  for (int i : order) {
    if (taken[i]) continue;
    if (static_cast<int>(test.size()) < test_size) {
      test.push_back(i);
    } else {
      train.push_back(i);
    }
  }

  MetaSplit split{clean.subset(train), clean.subset(meta), clean.subset(test)};
  // Meta and test sets always carry their true labels.
  split.meta.labels = split.meta.clean_labels;
  split.test.labels = split.test.clean_labels;
  return split;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");

  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() < 2) {
      throw SchemaError("dataset '" + path.string() + "': line " + std::to_string(line_no) +
                        " needs at least one feature and a label");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw SchemaError("dataset '" + path.string() + "': line " + std::to_string(line_no) +
                        " has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(width));
    }
    std::vector<double> row(width - 1);
    for (std::size_t j = 0; j + 1 < width; ++j) {
      const std::string f = trim(fields[j]);
      const auto res = std::from_chars(f.data(), f.data() + f.size(), row[j]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(row[j])) {
        throw ParseError("dataset '" + path.string() + "': bad feature '" + f + "'", line_no);
      }
    }
    const std::string lf = trim(fields.back());
    long long label = 0;
    const auto res = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (res.ec != std::errc() || res.ptr != lf.data() + lf.size()) {
      throw ParseError("dataset '" + path.string() + "': bad label '" + lf + "'", line_no);
    }
    rows.push_back(std::move(row));
    raw_labels.push_back(label);
  }
  if (rows.empty()) throw SchemaError("dataset '" + path.string() + "' is empty");

  const std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
  std::map<long long, int> index;
  Dataset out;
  for (long long v : distinct) {
    index[v] = static_cast<int>(out.label_values.size());
    out.label_values.push_back(v);
  }
  out.num_classes = static_cast<int>(distinct.size());
  out.features.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < width; ++j) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    out.labels.push_back(index[raw_labels[i]]);
  }
  out.clean_labels = out.labels;
  out.provenance.generator = "csv:" + path.filename().string();
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path.string() + "'");
  char buf[64];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, data.features(static_cast<Eigen::Index>(i), j));
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    const int y = data.labels[i];
    if (data.label_values.empty()) {
      out << y;
    } else {
      out << data.label_values[y];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing dataset '" + path.string() + "'");
}

nlohmann::json dataset_manifest(const Dataset& data) {
  std::vector<int> counts(data.num_classes, 0);
  for (int y : data.labels) ++counts[y];
  return {{"samples", data.size()},
          {"classes", data.num_classes},
          {"dim", data.dim()},
          {"class_counts", counts},
          {"generator", data.provenance.generator},
          {"noise_type", to_string(data.provenance.noise)},
          {"noise_rate", data.provenance.noise_rate},
          {"observed_noise_fraction", data.noisy_fraction()},
          {"seed", data.provenance.seed}};
}

}  // namespace arl
