#include "arl/experiment.hpp"

#include "arl/checkpoint.hpp"
#include "arl/errors.hpp"
#include "arl/losses.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#ifndef ARL_VERSION
#define ARL_VERSION "dev"
#endif

namespace arl {

namespace {

using nlohmann::json;

// Reads keys from a JSON object and rejects any it was not asked about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return read<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return read<T>(key);
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  template <typename T>
  T read(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

// A lambda given as a multiple of ln c (or left at its default) is reported
// through `lambda_factor` so that csv datasets can resolve it once c is known.
HyperParams parse_hyper(const json& j, int num_classes, const std::string& where,
                        std::optional<double>* lambda_factor = nullptr) {
  StrictObject obj(j, where);
  const auto variant = parse_loss_variant(obj.require<std::string>("variant"));
  HyperParams h = HyperParams::defaults(variant, std::max(num_classes, 2));
  h.q = obj.get("q", h.q);
  h.gamma1 = obj.get("gamma1", h.gamma1);
  h.gamma2 = obj.get("gamma2", h.gamma2);
  h.t1 = obj.get("t1", h.t1);
  h.t2 = obj.get("t2", h.t2);
  const double log_c = std::log(static_cast<double>(std::max(num_classes, 2)));
  std::optional<double> factor;
  if (obj.has("lambda")) {
    if (obj.has("lambda_factor")) throw ConfigError(where + ": give lambda or lambda_factor, not both");
    h.lambda = obj.get("lambda", h.lambda);
  } else {
    factor = obj.get("lambda_factor", h.lambda / log_c);
    h.lambda = *factor * log_c;
  }
  if (lambda_factor) *lambda_factor = factor;
  h.d = obj.get("d", h.d);
  h.rce_A = obj.get("rce_A", h.rce_A);
  obj.finish();
  h.validate();
  return h;
}

json hyper_json(const HyperParams& h) { return hyper_to_json(h); }

template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  std::size_t threads = workers > 0 ? static_cast<std::size_t>(workers)
                                    : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  std::vector<std::exception_ptr> errors(count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::uint64_t data_seed(const ExperimentConfig& c) { return c.dataset.seed.value_or(c.seed); }

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  StrictObject root(j, "config");
  ExperimentConfig c;
  c.seed = root.get<std::uint64_t>("seed", 0);

  if (root.has("dataset")) {
    StrictObject ds(root.at("dataset"), "dataset");
    auto& d = c.dataset;
    if (ds.has("csv")) {
      d.generator = "csv";
      d.csv_path = ds.require<std::string>("csv");
      d.test_fraction = ds.get("test_fraction", d.test_fraction);
    } else {
      d.generator = ds.get<std::string>("generator", "blobs");
      if (d.generator != "blobs") throw ConfigError("dataset: unknown generator '" + d.generator + "'");
      d.train_size = ds.get("train", d.train_size);
      d.test_size = ds.get("test", d.test_size);
      d.num_classes = ds.get("classes", d.num_classes);
      d.dim = ds.get("dim", d.dim);
      d.spread = ds.get("spread", d.spread);
      if (d.train_size < 1 || d.test_size < 0) throw ConfigError("dataset: invalid sizes");
    }
    d.meta_size = ds.get("meta", d.meta_size);
    if (ds.has("seed")) d.seed = ds.get<std::uint64_t>("seed", 0);
    ds.finish();
  }

  if (root.has("noise")) {
    StrictObject ns(root.at("noise"), "noise");
    c.noise.type = parse_noise_type(ns.get<std::string>("type", "symmetric"));
    c.noise.rate = ns.get("rate", 0.0);
    c.noise.superclasses = ns.get("superclasses", std::vector<std::vector<int>>{});
    c.noise.exact_count = ns.get("exact_count", false);
    ns.finish();
    if (!(c.noise.rate >= 0.0 && c.noise.rate <= 1.0)) throw DomainError("noise.rate outside [0, 1]");
  }

  const int classes = c.dataset.generator == "csv" ? 0 : c.dataset.num_classes;
  std::optional<double> factor;
  if (root.has("loss")) {
    c.train.initial = parse_hyper(root.at("loss"), classes, "loss", &factor);
  } else {
    c.train.initial = HyperParams::defaults(LossVariant::kCe, std::max(classes, 2));
  }
  if (factor && c.dataset.generator == "csv") c.lambda_factor = factor;

  if (root.has("train")) {
    StrictObject tr(root.at("train"), "train");
    auto& t = c.train;
    t.alpha = tr.get("alpha", t.alpha);
    t.beta = tr.get("beta", t.beta);
    t.batch_size = tr.get("batch_size", t.batch_size);
    t.meta_batch_size = tr.get("meta_batch_size", t.meta_batch_size);
    t.iterations = tr.get("iterations", t.iterations);
    t.fd_eps = tr.get("fd_eps", t.fd_eps);
    t.hidden = tr.get("hidden", t.hidden);
    t.activation = parse_activation(tr.get<std::string>("activation", "tanh"));
    t.metrics_every = tr.get("metrics_every", t.metrics_every);
    t.momentum = tr.get("momentum", t.momentum);
    t.lr_milestones = tr.get("lr_milestones", t.lr_milestones);
    t.lr_decay = tr.get("lr_decay", t.lr_decay);
    t.decay_beta = tr.get("decay_beta", t.decay_beta);
    tr.finish();
  }
  c.train.seed = c.seed;

  if (root.has("output")) {
    StrictObject out(root.at("output"), "output");
    c.output_dir = out.get<std::string>("dir", c.output_dir.string());
    c.emit_weights = out.get("weights", c.emit_weights);
    c.emit_losscurve = out.get("losscurve", c.emit_losscurve);
    out.finish();
  }

  if (root.has("ablation")) {
    StrictObject ab(root.at("ablation"), "ablation");
    c.workers = ab.get("workers", c.workers);
    if (ab.has("grid")) {
      StrictObject g(ab.at("grid"), "ablation.grid");
      c.grid.q = g.get("q", c.grid.q);
      c.grid.lambda_factor = g.get("lambda_factor", c.grid.lambda_factor);
      c.grid.d = g.get("d", c.grid.d);
      c.grid.gamma = g.get("gamma", c.grid.gamma);
      c.grid.t1 = g.get("t1", c.grid.t1);
      c.grid.t2 = g.get("t2", c.grid.t2);
      g.finish();
    }
    ab.finish();
  }

  if (root.has("theory")) {
    StrictObject th(root.at("theory"), "theory");
    auto& t = c.theory;
    t.num_classes = th.get("classes", t.num_classes);
    t.points = th.get("points", t.points);
    t.grid_step = th.get("grid_step", t.grid_step);
    t.noise_rates = th.get("noise_rates", t.noise_rates);
    if (th.has("cases")) {
      const json& cases = th.at("cases");
      if (!cases.is_array()) throw ConfigError("theory.cases: expected an array");
      for (std::size_t i = 0; i < cases.size(); ++i) {
        t.cases.push_back({parse_hyper(cases[i], t.num_classes,
                                       "theory.cases[" + std::to_string(i) + "]")});
      }
    }
    th.finish();
  }
  root.finish();
  c.train.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json ds;
  if (dataset.generator == "csv") {
    ds = {{"csv", dataset.csv_path.string()}, {"test_fraction", dataset.test_fraction}};
  } else {
    ds = {{"generator", dataset.generator}, {"train", dataset.train_size},
          {"test", dataset.test_size},      {"classes", dataset.num_classes},
          {"dim", dataset.dim},             {"spread", dataset.spread}};
  }
  ds["meta"] = dataset.meta_size;
  if (dataset.seed) ds["seed"] = *dataset.seed;

  json loss = hyper_json(train.initial);
  if (lambda_factor) {
    loss.erase("lambda");
    loss["lambda_factor"] = *lambda_factor;
  }

  json cases = json::array();
  for (const auto& tc : theory.cases) cases.push_back(hyper_json(tc.hyper));

  return {{"seed", seed},
          {"dataset", ds},
          {"noise",
           {{"type", to_string(noise.type)},
            {"rate", noise.rate},
            {"superclasses", noise.superclasses},
            {"exact_count", noise.exact_count}}},
          {"loss", loss},
          {"train",
           {{"alpha", train.alpha},
            {"beta", train.beta},
            {"batch_size", train.batch_size},
            {"meta_batch_size", train.meta_batch_size},
            {"iterations", train.iterations},
            {"fd_eps", train.fd_eps},
            {"hidden", train.hidden},
            {"activation", to_string(train.activation)},
            {"metrics_every", train.metrics_every},
            {"momentum", train.momentum},
            {"lr_milestones", train.lr_milestones},
            {"lr_decay", train.lr_decay},
            {"decay_beta", train.decay_beta}}},
          {"output",
           {{"dir", output_dir.string()}, {"weights", emit_weights}, {"losscurve", emit_losscurve}}},
          {"ablation",
           {{"workers", workers},
            {"grid",
             {{"q", grid.q},
              {"lambda_factor", grid.lambda_factor},
              {"d", grid.d},
              {"gamma", grid.gamma},
              {"t1", grid.t1},
              {"t2", grid.t2}}}}},
          {"theory",
           {{"classes", theory.num_classes},
            {"points", theory.points},
            {"grid_step", theory.grid_step},
            {"noise_rates", theory.noise_rates},
            {"cases", cases}}}};
}

ExperimentConfig ExperimentConfig::with_seed(std::uint64_t s) const {
  ExperimentConfig c = *this;
  c.seed = s;
  c.train.seed = s;
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

MetaSplit prepare_data(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  const std::uint64_t s = data_seed(config);
  MetaSplit split;
  if (d.generator == "csv") {
    const Dataset clean = load_csv(d.csv_path);
    split = split_meta(clean, d.meta_size, d.test_fraction, s + 1);
  } else {
    const int n = d.train_size + d.meta_size + d.test_size;
    const Dataset clean = gen_blobs(n, d.num_classes, d.dim, d.spread, s);
    split = split_meta(clean, d.meta_size, static_cast<double>(d.test_size) / n, s + 1);
  }
  const NoiseOptions opts{config.noise.exact_count};
  switch (config.noise.type) {
    case NoiseType::kNone:
      break;
    case NoiseType::kSymmetric:
      split.train = inject_symmetric(split.train, config.noise.rate, s + 2, opts);
      break;
    case NoiseType::kAsymmetric:
      split.train = inject_asymmetric(split.train, config.noise.rate, s + 2, opts);
      break;
    case NoiseType::kHierarchical:
      split.train =
          inject_hierarchical(split.train, config.noise.rate, config.noise.superclasses, s + 2, opts);
      break;
  }
  return split;
}

namespace {

// Fills any hyperparameter that depends on the class count.
ExperimentConfig resolve(const ExperimentConfig& config, int num_classes) {
  ExperimentConfig c = config;
  if (c.lambda_factor) {
    c.train.initial.lambda = *c.lambda_factor * std::log(static_cast<double>(num_classes));
    c.lambda_factor.reset();
  }
  c.train.seed = c.seed;
  c.train.validate();
  return c;
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& input) {
  RunArtifacts art;
  art.data = prepare_data(input);
  const ExperimentConfig config = resolve(input, art.data.train.num_classes);
  ensure_dir(config.output_dir);

  try {
    art.result = arl_train(art.data.train, art.data.meta, art.data.test, config.train);
  } catch (const TrainingDiverged& e) {
    Checkpoint dump{e.state().w, e.state().hyper,
                    {{"iteration", e.state().iteration}, {"error", e.what()}}};
    save_checkpoint(config.output_dir / "failure_state.bin", dump);
    throw;
  }

  art.metrics_csv = config.output_dir / "metrics.csv";
  write_metrics_csv(art.metrics_csv, art.result.metrics);

  art.checkpoint = config.output_dir / "checkpoint.bin";
  save_checkpoint(art.checkpoint,
                  {art.result.state.w, art.result.state.hyper,
                   {{"iteration", art.result.state.iteration},
                    {"classes", art.data.train.num_classes}}});

  if (config.emit_weights && config.train.initial.variant == LossVariant::kPolySoft) {
    art.weights_csv = config.output_dir / "weights.csv";
    write_weights_csv(*art.weights_csv, art.data.train,
                      compute_sample_weights(art.result.state.w, art.result.state.hyper,
                                             art.data.train));
  }
  if (config.emit_losscurve) {
    art.losscurve_csv = config.output_dir / "losscurve.csv";
    write_losscurve_csv(*art.losscurve_csv, art.result.state.hyper,
                        emit_losscurve(art.result.state.hyper));
  }

  const auto& last = art.result.metrics.back();
  json final_hyper = json::object();
  {
    const auto names = art.result.state.hyper.active_names();
    const VectorXd v = art.result.state.hyper.active_values();
    for (std::size_t k = 0; k < names.size(); ++k) final_hyper[names[k]] = v[static_cast<Eigen::Index>(k)];
  }
  art.manifest = config.output_dir / "manifest.json";
  write_json(art.manifest, {{"tool", "arl"},
                            {"version", ARL_VERSION},
                            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                          std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                          std::to_string(EIGEN_MINOR_VERSION)},
                            {"config", config.to_json()},
                            {"config_hash", config_hash(config)},
                            {"seed", config.seed},
                            {"data",
                             {{"train", dataset_manifest(art.data.train)},
                              {"meta", dataset_manifest(art.data.meta)},
                              {"test", dataset_manifest(art.data.test)}}},
                            {"final",
                             {{"iteration", last.iteration},
                              {"test_acc", last.test_acc},
                              {"hyper", final_hyper}}},
                            {"artifacts", {"metrics.csv", "checkpoint.bin", "checkpoint.json"}}});
  return art;
}

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFixed:
      return "fixed";
    case AblationMode::kOpt1:
      return "opt1";
    case AblationMode::kOpt2:
      return "opt2";
    case AblationMode::kAdaptive:
      return "adaptive";
  }
  return "?";
}

AblationMode parse_ablation_mode(std::string_view name) {
  for (auto m : {AblationMode::kFixed, AblationMode::kOpt1, AblationMode::kOpt2,
                 AblationMode::kAdaptive}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown ablation mode '" + std::string(name) + "'");
}

std::vector<AblationMode> parse_ablation_modes(std::string_view list) {
  std::vector<AblationMode> modes;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const auto token = list.substr(start, comma == std::string_view::npos ? list.size() - start
                                                                          : comma - start);
    if (!token.empty()) {
      const auto m = parse_ablation_mode(token);
      if (std::find(modes.begin(), modes.end(), m) != modes.end()) {
        throw ConfigError("ablation mode '" + std::string(token) + "' listed twice");
      }
      modes.push_back(m);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (modes.empty()) throw ConfigError("no ablation modes given");
  return modes;
}

const AblationCurve& AblationResult::at(AblationMode mode) const {
  for (const auto& c : curves)
    if (c.mode == mode) return c;
  throw ConfigError("ablation result has no '" + std::string(to_string(mode)) + "' curve");
}

std::vector<HyperParams> ablation_candidates(const HyperParams& base, const AblationGrid& grid,
                                             int num_classes) {
  std::vector<HyperParams> out;
  const double log_c = std::log(static_cast<double>(num_classes));
  auto add = [&](VectorXd values) {
    HyperParams h = base.with_active_values(values);
    h.validate();
    out.push_back(h);
  };
  switch (base.variant) {
    case LossVariant::kCe:
      throw ConfigError("ablation needs a loss with hyperparameters");
    case LossVariant::kGce:
      for (double q : grid.q) add(VectorXd::Constant(1, q));
      break;
    case LossVariant::kSl:
      for (double g1 : grid.gamma)
        for (double g2 : grid.gamma) add((VectorXd(2) << g1, g2).finished());
      break;
    case LossVariant::kBiTempered:
      for (double t1 : grid.t1)
        for (double t2 : grid.t2) add((VectorXd(2) << t1, t2).finished());
      break;
    case LossVariant::kPolySoft:
      for (double f : grid.lambda_factor)
        for (double d : grid.d) add((VectorXd(2) << f * log_c, d).finished());
      break;
  }
  if (out.empty()) throw ConfigError("ablation grid is empty");
  return out;
}

namespace {

AblationCurve curve_from(AblationMode mode, const TrainResult& r) {
  AblationCurve c{mode, {}, {}, r.state.hyper};
  for (const auto& row : r.metrics) {
    c.iterations.push_back(row.iteration);
    c.test_acc.push_back(row.test_acc);
  }
  return c;
}

}  // namespace

AblationResult run_ablation(const ExperimentConfig& config, const std::vector<AblationMode>& modes) {
  return run_ablation(config, prepare_data(config), modes);
}

AblationResult run_ablation(const ExperimentConfig& input, const MetaSplit& data,
                            const std::vector<AblationMode>& modes) {
  const ExperimentConfig config = resolve(input, data.train.num_classes);
  if (config.train.initial.num_active() == 0) {
    throw ConfigError("ablation needs a loss with hyperparameters");
  }
  auto wants = [&](AblationMode m) { return std::find(modes.begin(), modes.end(), m) != modes.end(); };

  std::optional<TrainResult> adaptive;
  if (wants(AblationMode::kAdaptive) || wants(AblationMode::kOpt1) || wants(AblationMode::kOpt2)) {
    adaptive = arl_train(data.train, data.meta, data.test, config.train, {.keep_snapshots = true});
  }

  TrainConfig frozen = config.train;
  frozen.beta = 0.0;

  std::map<AblationMode, AblationCurve> curves;
  if (adaptive) curves.emplace(AblationMode::kAdaptive, curve_from(AblationMode::kAdaptive, *adaptive));

  if (wants(AblationMode::kOpt1)) {
    TrainConfig tc = frozen;
    tc.initial = adaptive->state.hyper;
    curves.emplace(AblationMode::kOpt1,
                   curve_from(AblationMode::kOpt1, arl_train(data.train, data.meta, data.test, tc)));
  }

  if (wants(AblationMode::kOpt2)) {
    // Each segment restarts from the adaptive run's state at a snapshot and
    // trains conventionally with that snapshot's hyperparameters until the next.
    const auto& snaps = adaptive->snapshots;
    std::vector<double> acc(snaps.size() - 1);
    std::vector<int> iters(snaps.size() - 1);
    parallel_for(snaps.size() - 1, config.workers, [&](std::size_t k) {
      const int length = snaps[k + 1].iteration - snaps[k].iteration;
      TrainState start = snaps[k];
      const auto seg = continue_training(std::move(start), data.train, data.meta, data.test, frozen,
                                         length);
      acc[k] = seg.metrics.back().test_acc;
      iters[k] = seg.state.iteration;
    });
    curves.emplace(AblationMode::kOpt2, AblationCurve{AblationMode::kOpt2, iters, acc,
                                                      adaptive->state.hyper});
  }

  if (wants(AblationMode::kFixed)) {
    const auto candidates =
        ablation_candidates(config.train.initial, config.grid, data.train.num_classes);
    std::vector<TrainResult> runs(candidates.size());
    std::vector<double> val_acc(candidates.size());
    std::vector<double> val_loss(candidates.size());
    parallel_for(candidates.size(), config.workers, [&](std::size_t i) {
      TrainConfig tc = frozen;
      tc.initial = candidates[i];
      runs[i] = arl_train(data.train, data.meta, data.test, tc);
      val_acc[i] = accuracy(runs[i].state.w, data.meta);
      Batch all;
      all.features = data.meta.features;
      all.labels = data.meta.clean_labels;
      val_loss[i] = meta_objective(runs[i].state.w, all).mean_loss;
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      if (val_acc[i] > val_acc[best] || (val_acc[i] == val_acc[best] && val_loss[i] < val_loss[best])) {
        best = i;
      }
    }
    curves.emplace(AblationMode::kFixed, curve_from(AblationMode::kFixed, runs[best]));
  }

  AblationResult result;
  for (auto m : modes) result.curves.push_back(curves.at(m));
  return result;
}

void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result) {
  std::set<int> iterations;
  for (const auto& c : result.curves) iterations.insert(c.iterations.begin(), c.iterations.end());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iter";
  for (const auto& c : result.curves) out << ',' << to_string(c.mode);
  out << '\n';
  for (int it : iterations) {
    out << it;
    for (const auto& c : result.curves) {
      out << ',';
      const auto pos = std::find(c.iterations.begin(), c.iterations.end(), it);
      if (pos != c.iterations.end()) out << format_number(c.test_acc[static_cast<std::size_t>(pos - c.iterations.begin())]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

double learned_loss_at_ce(const HyperParams& h, double ce_value) {
  if (h.variant == LossVariant::kPolySoft) return polysoft<double>(ce_value, h.lambda, h.d).value;
  const double p = std::exp(-ce_value);
  const VectorXd u = (VectorXd(2) << p, 1.0 - p).finished();
  return simplex_loss(h, u, 0);
}

LossCurveRow losscurve_point(const HyperParams& h, double x) {
  h.validate();
  LossCurveRow row;
  row.x = x;
  if (h.variant == LossVariant::kPolySoft) {
    row.ce = x;
    row.zero_one = std::exp(-x) < 0.5 ? 1.0 : 0.0;
    row.learned = polysoft<double>(x, h.lambda, h.d).value;
    return row;
  }
  if (!(x > 0.0 && x <= 1.0)) throw DomainError("losscurve: probability must lie in (0, 1]");
  const VectorXd u = (VectorXd(2) << x, 1.0 - x).finished();
  row.ce = -std::log(x);
  row.zero_one = x < 0.5 ? 1.0 : 0.0;
  row.learned = simplex_loss(h, u, 0);
  return row;
}

std::vector<LossCurveRow> emit_losscurve(const HyperParams& h) {
  constexpr int kPoints = 500;
  std::vector<LossCurveRow> rows;
  rows.reserve(kPoints);
  const bool by_ce = h.variant == LossVariant::kPolySoft;
  const double lo = by_ce ? 0.0 : 0.001;
  const double hi = by_ce ? 3.0 * h.lambda : 1.0;
  for (int i = 0; i < kPoints; ++i) {
    const double x = i == kPoints - 1 ? hi : lo + (hi - lo) * i / (kPoints - 1);
    rows.push_back(losscurve_point(h, x));
  }
  return rows;
}

void write_losscurve_csv(const std::filesystem::path& path, const HyperParams& h,
                         const std::vector<LossCurveRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << (h.variant == LossVariant::kPolySoft ? "ce_value" : "p") << ",ce,zero_one,learned\n";
  for (const auto& r : rows) {
    out << format_number(r.x) << ',' << format_number(r.ce) << ',' << format_number(r.zero_one)
        << ',' << format_number(r.learned) << '\n';
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

double flattening_point(const HyperParams& h, double threshold, double max_ce, double step) {
  const int n = static_cast<int>(std::lround(max_ce / step));
  double prev = learned_loss_at_ce(h, 0.0);
  for (int i = 0; i < n; ++i) {
    const double x = i * step;
    const double next = learned_loss_at_ce(h, (i + 1) * step);
    if ((next - prev) / step < threshold) return x;
    prev = next;
  }
  return max_ce;
}

json verify_bounds(const TheorySpec& spec) {
  std::vector<HyperParams> cases;
  for (const auto& c : spec.cases) cases.push_back(c.hyper);
  if (cases.empty()) {
    const double log_c = std::log(static_cast<double>(spec.num_classes));
    HyperParams poly = HyperParams::defaults(LossVariant::kPolySoft, spec.num_classes);
    poly.d = 2.0;
    poly.lambda = log_c;
    cases.push_back(poly);
    poly.lambda = 2.0 * log_c;
    cases.push_back(poly);
    HyperParams bi = HyperParams::defaults(LossVariant::kBiTempered, spec.num_classes);
    bi.t1 = 0.5;
    bi.t2 = 2.0;
    cases.push_back(bi);
  }

  json results = json::array();
  json bounded = json::array();
  bool pass = true;
  FiniteWorld base = FiniteWorld::round_robin(spec.points, spec.num_classes, spec.grid_step, 0.0);
  const int res = base.grid_resolution();
  for (const auto& h : cases) {
    for (double eta : spec.noise_rates) {
      FiniteWorld world = base;
      world.noise_rate = eta;
      const RiskReport r = riskgap_verify(world, h);
      json entry = to_json(r);
      if (h.variant == LossVariant::kPolySoft &&
          std::abs(h.lambda - std::log(static_cast<double>(spec.num_classes))) < 1e-12) {
        const bool equal = std::abs(r.noisy_gap) <= r.tol_grid;
        entry["checks"]["noise_tolerant_equality"] = equal;
        entry["pass"] = r.all_ok() && equal;
      }
      pass = pass && entry["pass"].get<bool>();
      results.push_back(std::move(entry));
    }
    const LossSumRange range = loss_sum_range(h, spec.num_classes, res);
    bounded.push_back({{"loss", to_string(h.variant)},
                       {"hyper", hyper_json(h)},
                       {"sum_min", range.min},
                       {"sum_max", range.max},
                       {"spread", range.spread()},
                       {"finite", std::isfinite(range.spread())}});
  }
  return {{"classes", spec.num_classes},
          {"points", spec.points},
          {"grid_step", spec.grid_step},
          {"results", results},
          {"bounded_loss", bounded},
          {"pass", pass}};
}

void gen_data(const ExperimentConfig& config) {
  const MetaSplit split = prepare_data(config);
  ensure_dir(config.output_dir);
  write_csv(config.output_dir / "train.csv", split.train);
  write_csv(config.output_dir / "meta.csv", split.meta);
  write_csv(config.output_dir / "test.csv", split.test);
  {
    std::ofstream out(config.output_dir / "train_clean_labels.csv");
    if (!out) throw IoError("cannot write clean labels");
    out << "sample_id,clean_label\n";
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      const int y = split.train.clean_labels[i];
      out << i << ',';
      if (split.train.label_values.empty()) {
        out << y;
      } else {
        out << split.train.label_values[static_cast<std::size_t>(y)];
      }
      out << '\n';
    }
  }
  write_json(config.output_dir / "manifest.json",
             {{"config", config.to_json()},
              {"config_hash", config_hash(config)},
              {"train", dataset_manifest(split.train)},
              {"meta", dataset_manifest(split.meta)},
              {"test", dataset_manifest(split.test)}});
}

}  // namespace arl
