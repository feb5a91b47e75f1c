#include "arl/checkpoint.hpp"
#include "arl/errors.hpp"
#include "arl/experiment.hpp"

#include <CLI11.hpp>
#include <iostream>

namespace {

int run(int argc, char** argv) {
  CLI::App app{"Adaptive robust-loss learning under noisy labels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ARL_VERSION);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string modes = "fixed,opt1,opt2,adaptive";
  std::string checkpoint_path;
  std::string csv_path;

  auto* train = app.add_subcommand("train", "Run ARL training and write metrics and a checkpoint");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required();
  train->add_option("--seed", seed, "Override the experiment seed");
  train->add_option("--out", out_dir, "Override the output directory");

  auto* ablate = app.add_subcommand("ablate", "Compare fixed, opt1, opt2 and adaptive schedules");
  ablate->add_option("--config", config_path, "Experiment config (JSON)")->required();
  ablate->add_option("--modes", modes, "Comma-separated modes");
  ablate->add_option("--seed", seed, "Override the experiment seed");
  ablate->add_option("--out", out_dir, "Override the output directory");

  auto* curve = app.add_subcommand("losscurve", "Tabulate the learned loss of a checkpoint");
  curve->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  curve->add_option("--out", csv_path, "Output CSV")->required();

  auto* verify = app.add_subcommand("verify-bounds", "Check the risk-gap bounds on a simplex grid");
  verify->add_option("--config", config_path, "Experiment config (JSON)")->required();

  auto* gen = app.add_subcommand("gen-data", "Write the noisy train, meta and test splits");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
  gen->add_option("--seed", seed, "Override the experiment seed");
  gen->add_option("--out", out_dir, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(arl::ExitCode::kConfig);
  }

  auto load = [&] {
    auto config = arl::ExperimentConfig::load(config_path);
    if (seed) config = config.with_seed(*seed);
    if (!out_dir.empty()) config.output_dir = out_dir;
    return config;
  };

  if (*train) {
    const auto art = arl::run_experiment(load());
    const auto& last = art.result.metrics.back();
    std::cout << "iterations " << last.iteration << " test_acc " << arl::format_number(last.test_acc)
              << "\nwrote " << art.metrics_csv.string() << '\n';
  } else if (*ablate) {
    const auto config = load();
    const auto result = arl::run_ablation(config, arl::parse_ablation_modes(modes));
    std::filesystem::create_directories(config.output_dir);
    const auto path = config.output_dir / "ablation.csv";
    arl::write_ablation_csv(path, result);
    for (const auto& c : result.curves) {
      std::cout << arl::to_string(c.mode) << ' ' << arl::format_number(c.final_acc()) << '\n';
    }
    std::cout << "wrote " << path.string() << '\n';
  } else if (*curve) {
    const auto ckpt = arl::load_checkpoint(checkpoint_path);
    arl::write_losscurve_csv(csv_path, ckpt.hyper, arl::emit_losscurve(ckpt.hyper));
  } else if (*verify) {
    const auto report = arl::verify_bounds(arl::ExperimentConfig::load(config_path).theory);
    std::cout << report.dump(2) << '\n';
  } else if (*gen) {
    const auto config = load();
    arl::gen_data(config);
    std::cout << "wrote " << config.output_dir.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  arl::set_warning_sink([](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; });
  try {
    return run(argc, argv);
  } catch (const arl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(arl::ExitCode::kConfig);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(arl::ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
