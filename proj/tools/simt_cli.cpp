#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "simt/harness/run.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;
constexpr int kIoError = 4;

int dispatch(int argc, char** argv) {
  CLI::App app{"SiMT meta-learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, network, resume_path, out_path;
  int64_t n_tasks = 0;
  double half_width = 1.0;
  int res = 21;

  auto* train = app.add_subcommand("train", "Train per the experiment config");
  train->add_option("config", config_path, "experiment config (JSON)")->required();
  train->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on fresh tasks");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("config", config_path, "experiment config (JSON)")->required();
  eval->add_option("--network", network, "theta | momentum");
  eval->add_option("--tasks", n_tasks, "number of evaluation tasks");

  auto* landscape = app.add_subcommand("landscape", "Loss-landscape scan around a checkpoint");
  landscape->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  landscape->add_option("config", config_path, "experiment config (JSON)")->required();
  landscape->add_option("--network", network, "theta | momentum");
  landscape->add_option("--half-width", half_width, "grid half width");
  landscape->add_option("--res", res, "grid resolution (odd)");
  landscape->add_option("--tasks", n_tasks, "training tasks in the scan sample");
  landscape->add_option("--out", out_path, "output CSV path");

  auto* validate = app.add_subcommand("validate-config", "Check a config and exit");
  validate->add_option("config", config_path, "experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("validate-config")) {
    simt::harness::parse_config_file(config_path);
    std::printf("ok: %s\n", config_path.c_str());
    return kOk;
  }

  simt::harness::ExperimentConfig cfg = simt::harness::parse_config_file(config_path);

  if (app.got_subcommand("train")) {
    simt::harness::run_experiment(cfg, resume_path);
    std::printf("done: metrics and checkpoints in %s\n", cfg.output_dir.c_str());
    return kOk;
  }

  if (app.got_subcommand("eval")) {
    const int64_t tasks = n_tasks > 0 ? n_tasks : cfg.schedule.test_tasks;
    auto s = simt::harness::evaluate_checkpoint(cfg, checkpoint_path, network, tasks,
                                                cfg.seed + 1);
    if (cfg.mode == "rl") {
      std::printf("network=%s tasks=%lld return@1step=%.6f (ci95 %.6f)\n", s.network.c_str(),
                  static_cast<long long>(s.n), s.mean_acc, s.ci95_acc);
    } else {
      std::printf("network=%s tasks=%lld loss=%.6f +- %.6f (ci95 %.6f)", s.network.c_str(),
                  static_cast<long long>(s.n), s.mean_loss, s.std_loss, s.ci95_loss);
      if (s.mean_acc > 0) std::printf(" acc=%.4f (ci95 %.4f)", s.mean_acc, s.ci95_acc);
      std::printf("\n");
    }
    return kOk;
  }

  // landscape
  const int64_t tasks = n_tasks > 0 ? n_tasks : 16;
  const std::string out = out_path.empty() ? cfg.output_dir + "/landscape.csv" : out_path;
  simt::harness::landscape_to_csv(cfg, checkpoint_path, network, half_width, res, tasks, out);
  std::printf("landscape written to %s\n", out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const simt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const simt::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumericError;
  } catch (const simt::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIoError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
