#include "arl/checkpoint.hpp"
#include "arl/experiment.hpp"
#include "arl/losses.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace arl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "arl_test_experiment" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json small_config(const fs::path& out, const std::string& loss = "gce") {
  return {{"seed", 3},
          {"dataset", {{"train", 300}, {"meta", 30}, {"test", 200}, {"classes", 3}, {"spread", 0.4}}},
          {"noise", {{"type", "symmetric"}, {"rate", 0.4}}},
          {"loss", {{"variant", loss}}},
          {"train", {{"alpha", 0.5}, {"batch_size", 10}, {"iterations", 100}, {"metrics_every", 25}}},
          {"output", {{"dir", out.string()}}}};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(ARL_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("config parsing") {
  const auto c = ExperimentConfig::from_json(small_config("out"));
  CHECK(c.seed == 3);
  CHECK(c.train.seed == 3);
  CHECK(c.train.initial.variant == LossVariant::kGce);
  CHECK(c.train.initial.q == 0.3);
  CHECK(c.dataset.train_size == 300);
  CHECK(c.noise.rate == 0.4);

  json j = small_config("out", "polysoft");
  CHECK(ExperimentConfig::from_json(j).train.initial.lambda == doctest::Approx(2 * std::log(3.0)));
  j["loss"]["lambda_factor"] = 1.0;
  CHECK(ExperimentConfig::from_json(j).train.initial.lambda == doctest::Approx(std::log(3.0)));
  j["loss"]["lambda"] = 2.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("config parsing rejects typos and bad values") {
  json j = small_config("out");
  j["loss"]["qq"] = 0.5;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  j = small_config("out");
  j["trian"] = json::object();
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  j = small_config("out");
  j["loss"]["q"] = 1.5;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), DomainError);
  j = small_config("out");
  j["train"]["alpha"] = "fast";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  j = small_config("out");
  j["noise"]["type"] = "pairwise";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json::array()), ConfigError);
}

TEST_CASE("resolved config round trips") {
  const auto c = ExperimentConfig::from_json(small_config("out", "sl"));
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c.with_seed(4)) != config_hash(c));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("run_experiment writes reproducible artifacts") {
  const auto dir = scratch("run");
  auto c = ExperimentConfig::from_json(small_config(dir / "a", "polysoft"));
  const auto a = run_experiment(c);
  CHECK(fs::exists(a.metrics_csv));
  CHECK(fs::exists(a.checkpoint));
  CHECK(fs::exists(checkpoint_sidecar(a.checkpoint)));
  CHECK(fs::exists(a.manifest));
  REQUIRE(a.weights_csv.has_value());
  CHECK(fs::exists(*a.weights_csv));
  REQUIRE(a.losscurve_csv.has_value());

  c.output_dir = dir / "b";
  const auto b = run_experiment(c);
  CHECK(slurp(a.metrics_csv) == slurp(b.metrics_csv));
  CHECK(slurp(a.checkpoint) == slurp(b.checkpoint));

  // The manifest is enough to rerun the experiment.
  const json manifest = json::parse(slurp(a.manifest));
  CHECK(manifest["seed"] == 3);
  auto again = ExperimentConfig::from_json(manifest["config"]);
  CHECK(config_hash(again) == manifest["config_hash"]);
  again.output_dir = dir / "c";
  CHECK(slurp(run_experiment(again).metrics_csv) == slurp(a.metrics_csv));

  const auto ck = load_checkpoint(a.checkpoint);
  CHECK(ck.hyper.lambda == a.result.state.hyper.lambda);
}

TEST_CASE("csv datasets") {
  const auto dir = scratch("csv");
  const auto blobs = gen_blobs(400, 3, 2, 0.4, 1);
  write_csv(dir / "data.csv", blobs);
  json j = small_config(dir / "out", "polysoft");
  j["dataset"] = {{"csv", (dir / "data.csv").string()}, {"meta", 30}, {"test_fraction", 0.25}};
  const auto c = ExperimentConfig::from_json(j);
  CHECK(c.lambda_factor.has_value());
  const auto art = run_experiment(c);
  CHECK(art.data.test.size() == 100);
  CHECK(art.data.meta.size() == 30);
  CHECK(load_checkpoint(art.checkpoint).hyper.lambda > 0.0);

  j["dataset"]["csv"] = (dir / "missing.csv").string();
  try {
    run_experiment(ExperimentConfig::from_json(j));
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing.csv") != std::string::npos);
  }
}

TEST_CASE("ablation modes") {
  auto c = ExperimentConfig::from_json(small_config("unused", "sl"));
  c.grid.gamma = {0.1, 1.0};
  const auto modes = parse_ablation_modes("fixed,opt1,opt2,adaptive");
  const auto r = run_ablation(c, modes);
  REQUIRE(r.curves.size() == 4);
  CHECK(r.at(AblationMode::kOpt1).hyper.gamma1 == r.at(AblationMode::kAdaptive).hyper.gamma1);
  CHECK(r.at(AblationMode::kOpt1).hyper.gamma2 == r.at(AblationMode::kAdaptive).hyper.gamma2);
  CHECK(r.at(AblationMode::kOpt2).iterations == r.at(AblationMode::kAdaptive).iterations);
  CHECK(r.at(AblationMode::kFixed).iterations.back() == 100);

  // Parallel and serial pools agree.
  c.workers = 1;
  const auto serial = run_ablation(c, modes);
  for (auto m : modes) CHECK(serial.at(m).test_acc == r.at(m).test_acc);

  const auto dir = scratch("ablation");
  write_ablation_csv(dir / "one.csv", run_ablation(c, parse_ablation_modes("opt1")));
  std::ifstream in(dir / "one.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "iter,opt1");
  CHECK(std::count(row.begin(), row.end(), ',') == 1);

  CHECK_THROWS_AS(parse_ablation_modes("fixed,best"), ConfigError);
  CHECK_THROWS_AS(parse_ablation_modes("opt1,opt1"), ConfigError);
  CHECK_THROWS_AS(parse_ablation_modes(""), ConfigError);
  CHECK_THROWS_AS(run_ablation(ExperimentConfig::from_json(small_config("x", "ce")), modes), ConfigError);
}

TEST_CASE("ablation candidates cover the grid") {
  const AblationGrid g;
  CHECK(ablation_candidates(HyperParams::defaults(LossVariant::kGce, 3), g, 3).size() == 9);
  CHECK(ablation_candidates(HyperParams::defaults(LossVariant::kSl, 3), g, 3).size() == 9);
  CHECK(ablation_candidates(HyperParams::defaults(LossVariant::kBiTempered, 3), g, 3).size() == 9);
  const auto poly = ablation_candidates(HyperParams::defaults(LossVariant::kPolySoft, 3), g, 3);
  CHECK(poly.size() == 12);
  CHECK(poly.front().lambda == doctest::Approx(0.5 * std::log(3.0)));
}

TEST_CASE("loss curves") {
  HyperParams gce = HyperParams::defaults(LossVariant::kGce, 3);
  const auto rows = emit_losscurve(gce);
  REQUIRE(rows.size() == 500);
  CHECK(rows.front().x == doctest::Approx(0.001));
  CHECK(rows.back().x == 1.0);
  const auto half = losscurve_point(gce, 0.5);
  CHECK(half.ce == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(half.zero_one == 0.0);
  CHECK(losscurve_point(gce, 0.49).zero_one == 1.0);
  CHECK(half.learned == doctest::Approx((1 - std::pow(0.5, 0.3)) / 0.3));

  HyperParams poly = HyperParams::defaults(LossVariant::kPolySoft, 3);
  const auto prow = emit_losscurve(poly);
  CHECK(prow.back().x == doctest::Approx(3 * poly.lambda));
  for (const auto& r : prow) {
    if (r.x >= poly.lambda) CHECK(r.learned == doctest::Approx((poly.d - 1) * poly.lambda / poly.d));
  }
  CHECK_THROWS_AS(losscurve_point(gce, 1.5), DomainError);

  const auto dir = scratch("curve");
  write_losscurve_csv(dir / "c.csv", poly, prow);
  std::ifstream in(dir / "c.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "ce_value,ce,zero_one,learned");
}

TEST_CASE("flattening point") {
  // Slope of polysoft in the CE value is its weight (1 - x / lambda)^(1/(d-1)),
  // which falls below s at x = lambda (1 - s^(d-1)).
  for (double d : {2.0, 3.0, 5.0}) {
    HyperParams h = HyperParams::defaults(LossVariant::kPolySoft, 3);
    h.lambda = 1.7;
    h.d = d;
    CHECK(flattening_point(h) == doctest::Approx(1.7 * (1 - std::pow(0.05, d - 1))).epsilon(2e-3));
  }
  HyperParams ce = HyperParams::defaults(LossVariant::kCe, 3);
  CHECK(flattening_point(ce) == 10.0);
  HyperParams gce = HyperParams::defaults(LossVariant::kGce, 3);
  // d/dx (1 - e^{-qx}) / q = e^{-qx}
  CHECK(flattening_point(gce) == doctest::Approx(std::log(20.0) / 0.3).epsilon(1e-3));
}

TEST_CASE("verify_bounds report") {
  const json r = verify_bounds(TheorySpec{});
  CHECK(r["pass"] == true);
  CHECK(r["results"].size() == 9);
  CHECK(r["bounded_loss"].size() == 3);
  CHECK(r["results"][0]["checks"]["noise_tolerant_equality"] == true);
}

TEST_CASE("gen_data") {
  const auto dir = scratch("gen");
  auto c = ExperimentConfig::from_json(small_config(dir));
  gen_data(c);
  for (const char* f : {"train.csv", "meta.csv", "test.csv", "train_clean_labels.csv", "manifest.json"}) {
    CHECK(fs::exists(dir / f));
  }
  const Dataset train = load_csv(dir / "train.csv");
  CHECK(train.size() == 300);
  const json m = json::parse(slurp(dir / "manifest.json"));
  CHECK(m["train"]["noise_type"] == "symmetric");
  CHECK(m["meta"]["samples"] == 30);
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  write_text(dir / "ok.json", small_config(dir / "out").dump());
  CHECK(run_cli("train --config " + (dir / "ok.json").string(), dir / "log") == 0);
  CHECK(fs::exists(dir / "out" / "metrics.csv"));
  CHECK(run_cli("train --config " + (dir / "ok.json").string() + " --seed 9 --out " + (dir / "out9").string(),
                dir / "log") == 0);
  CHECK(slurp(dir / "out" / "metrics.csv") != slurp(dir / "out9" / "metrics.csv"));

  CHECK(run_cli("losscurve --checkpoint " + (dir / "out" / "checkpoint.bin").string() + " --out " +
                    (dir / "curve.csv").string(),
                dir / "log") == 0);
  CHECK(fs::exists(dir / "curve.csv"));
  CHECK(run_cli("ablate --config " + (dir / "ok.json").string() + " --modes opt1,adaptive --out " +
                    (dir / "ab").string(),
                dir / "log") == 0);
  CHECK(fs::exists(dir / "ab" / "ablation.csv"));
  CHECK(run_cli("gen-data --config " + (dir / "ok.json").string() + " --out " + (dir / "gen").string(),
                dir / "log") == 0);
  CHECK(fs::exists(dir / "gen" / "train.csv"));

  write_text(dir / "bounds.json", R"({"theory": {"noise_rates": [0.3]}})");
  CHECK(run_cli("verify-bounds --config " + (dir / "bounds.json").string(), dir / "bounds.out") == 0);
  CHECK(json::parse(slurp(dir / "bounds.out"))["pass"] == true);

  // Exit codes: 2 config, 3 numeric, 4 I/O.
  CHECK(run_cli("train", dir / "log") == 2);
  CHECK(run_cli("frobnicate", dir / "log") == 2);
  write_text(dir / "typo.json", R"({"seeed": 1})");
  CHECK(run_cli("train --config " + (dir / "typo.json").string(), dir / "log") == 2);
  CHECK(slurp(dir / "log").find("seeed") != std::string::npos);
  write_text(dir / "broken.json", "{");
  CHECK(run_cli("train --config " + (dir / "broken.json").string(), dir / "log") == 2);
  CHECK(run_cli("train --config " + (dir / "nope.json").string(), dir / "log") == 4);

  json bad = small_config(dir / "out");
  bad["dataset"] = {{"csv", (dir / "absent.csv").string()}};
  write_text(dir / "csv.json", bad.dump());
  CHECK(run_cli("train --config " + (dir / "csv.json").string(), dir / "log") == 4);
  CHECK(slurp(dir / "log").find("absent.csv") != std::string::npos);

  json diverge = small_config(dir / "div");
  diverge["train"]["alpha"] = 1e300;
  diverge["train"]["activation"] = "relu";
  write_text(dir / "div.json", diverge.dump());
  CHECK(run_cli("train --config " + (dir / "div.json").string(), dir / "log") == 3);
  CHECK(fs::exists(dir / "div" / "failure_state.bin"));
}
